//! Regularized logistic agent risk.
//!
//! `J(w) = E ln(1 + exp(-gamma h^T w)) + rho ||w||^2`, with features `h`
//! drawn from a declared Gaussian distribution and labels produced by a
//! ground-truth separator, `gamma = sign(h^T t)`.
//!
//! The population expectation has no closed form, so the "exact" gradient,
//! Hessian, and value are high-accuracy approximations: averages over a
//! large sample frozen at construction from a fixed seed. This keeps every
//! downstream computation deterministic. The stochastic-gradient oracle uses
//! one fresh sample per call.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::CostError;
use crate::scalar::{real, Scalar};

/// Default size of the frozen sample behind the deterministic oracle.
pub const DEFAULT_ORACLE_SAMPLES: usize = 100_000;

/// Gaussian feature distribution `h ~ N(mean, covariance)`.
#[derive(Debug, Clone)]
pub struct FeatureDistribution<T: Scalar> {
    mean: DVector<T>,
    covariance: DMatrix<T>,
    chol: DMatrix<T>,
}

impl<T: Scalar> FeatureDistribution<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self, CostError> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(CostError::DimensionMismatch {
                expected: m,
                got: covariance.nrows(),
            });
        }
        let chol = Cholesky::new(covariance.clone())
            .ok_or(CostError::CovarianceNotPositiveDefinite)?
            .l();
        Ok(Self {
            mean,
            covariance,
            chol,
        })
    }

    /// Standard normal features in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
            .expect("identity covariance is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    /// Second moment `E[h h^T] = covariance + mean mean^T`.
    pub fn second_moment(&self) -> DMatrix<T> {
        &self.covariance + &self.mean * self.mean.transpose()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        let g = DVector::from_fn(self.dim(), |_, _| T::standard_normal(rng));
        &self.mean + &self.chol * g
    }
}

/// `ln(1 + exp(x))` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-x))` without overflow.
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Logistic regression cost for one agent.
#[derive(Debug, Clone)]
pub struct LogisticCost<T: Scalar> {
    features: FeatureDistribution<T>,
    separator: DVector<T>,
    rho: T,
    oracle_seed: u64,
    oracle_features: Vec<DVector<T>>,
    oracle_labels: Vec<T>,
}

impl<T: Scalar> LogisticCost<T> {
    /// Build a logistic cost. `rho > 0` is required so the risk is strongly
    /// convex; `oracle_samples` sets the size of the frozen sample used for
    /// the deterministic gradient/Hessian approximations.
    pub fn new(
        features: FeatureDistribution<T>,
        separator: DVector<T>,
        rho: T,
        oracle_samples: usize,
        oracle_seed: u64,
    ) -> Result<Self, CostError> {
        if rho <= T::zero() {
            return Err(CostError::RidgeNotPositive { rho: rho.as_f64() });
        }
        if separator.len() != features.dim() {
            return Err(CostError::DimensionMismatch {
                expected: features.dim(),
                got: separator.len(),
            });
        }
        if oracle_samples == 0 {
            return Err(CostError::EmptyOracleSample);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(oracle_seed);
        let mut oracle_features = Vec::with_capacity(oracle_samples);
        let mut oracle_labels = Vec::with_capacity(oracle_samples);
        for _ in 0..oracle_samples {
            let h = features.sample(&mut rng);
            let gamma = label_of(&h, &separator);
            oracle_features.push(h);
            oracle_labels.push(gamma);
        }
        Ok(Self {
            features,
            separator,
            rho,
            oracle_seed,
            oracle_features,
            oracle_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn feature_distribution(&self) -> &FeatureDistribution<T> {
        &self.features
    }

    pub fn separator(&self) -> &DVector<T> {
        &self.separator
    }

    pub fn oracle_seed(&self) -> u64 {
        self.oracle_seed
    }

    pub fn oracle_len(&self) -> usize {
        self.oracle_features.len()
    }

    /// One labelled sample from the declared model.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<T>, T) {
        let h = self.features.sample(rng);
        let gamma = label_of(&h, &self.separator);
        (h, gamma)
    }

    /// Risk evaluated on the frozen sample (approximate expectation).
    pub fn value(&self, w: &DVector<T>) -> T {
        let n = real::<T>(self.oracle_features.len() as f64);
        let mut acc = T::zero();
        for (h, &gamma) in self.oracle_features.iter().zip(&self.oracle_labels) {
            acc += softplus(-gamma * h.dot(w));
        }
        acc / n + self.rho * w.norm_squared()
    }

    /// Gradient on the frozen sample plus the exact ridge term `2 rho w`.
    pub fn gradient(&self, w: &DVector<T>) -> DVector<T> {
        let mut acc = DVector::zeros(self.dim());
        for (h, &gamma) in self.oracle_features.iter().zip(&self.oracle_labels) {
            let z = gamma * h.dot(w);
            acc.axpy(-gamma * sigmoid(-z), h, T::one());
        }
        let n = real::<T>(self.oracle_features.len() as f64);
        acc / n + w * (real::<T>(2.0) * self.rho)
    }

    /// Sample-average Hessian `mean sigma(z) sigma(-z) h h^T + 2 rho I`.
    pub fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        let m = self.dim();
        let mut acc = DMatrix::zeros(m, m);
        for (h, &gamma) in self.oracle_features.iter().zip(&self.oracle_labels) {
            let z = gamma * h.dot(w);
            let weight = sigmoid(z) * sigmoid(-z);
            acc.syger(weight, h, h, T::one());
        }
        let n = real::<T>(self.oracle_features.len() as f64);
        acc /= n;
        // syger fills the lower triangle; mirror it.
        for i in 0..m {
            for j in (i + 1)..m {
                acc[(i, j)] = acc[(j, i)];
            }
        }
        for i in 0..m {
            acc[(i, i)] += real::<T>(2.0) * self.rho;
        }
        acc
    }

    /// `(2 rho, 2 rho + lambda_max(E[h h^T]) / 4)`: the log-loss Hessian is
    /// positive semi-definite and its sigmoid-derivative factor is at most
    /// 1/4, with the second moment taken from the declared distribution.
    pub fn bounds(&self) -> (T, T) {
        let second = self.features.second_moment();
        let eig = second
            .try_symmetric_eigen(T::default_epsilon() * real(4.0), 10_000)
            .expect("second moment eigendecomposition");
        let lambda_max = eig.eigenvalues.max();
        let lo = real::<T>(2.0) * self.rho;
        (lo, lo + lambda_max / real(4.0))
    }

    /// Per-sample stochastic gradient on one fresh draw.
    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, w: &DVector<T>, rng: &mut R) -> DVector<T> {
        let (h, gamma) = self.sample(rng);
        per_sample_gradient(w, &h, gamma, self.rho)
    }

    /// Deterministic minimizer of the frozen-sample risk (damped Newton).
    pub fn minimizer(&self, tol: T, max_iter: usize) -> DVector<T> {
        let mut w = DVector::zeros(self.dim());
        for _ in 0..max_iter {
            let g = self.gradient(&w);
            if g.norm() <= tol {
                break;
            }
            let h = self.hessian(&w);
            let step = h
                .lu()
                .solve(&g)
                .expect("logistic Hessian is positive definite");
            let mut t = T::one();
            let g0 = g.norm();
            loop {
                let cand = &w - &step * t;
                if self.gradient(&cand).norm() < g0 || t < real(1e-8) {
                    w = cand;
                    break;
                }
                t /= real(2.0);
            }
        }
        w
    }
}

/// `sign(h^T t)` with `sign(0) = +1`.
fn label_of<T: Scalar>(h: &DVector<T>, separator: &DVector<T>) -> T {
    if h.dot(separator) >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Gradient of `ln(1 + exp(-gamma h^T w)) + rho ||w||^2` at one sample.
pub fn per_sample_gradient<T: Scalar>(w: &DVector<T>, h: &DVector<T>, gamma: T, rho: T) -> DVector<T> {
    let z = gamma * h.dot(w);
    let mut g = h * (-gamma * sigmoid(-z));
    g.axpy(real::<T>(2.0) * rho, w, T::one());
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::SeedableRng;

    fn toy_cost(samples: usize) -> LogisticCost<f64> {
        LogisticCost::new(
            FeatureDistribution::standard(2),
            dvector![1.0, 0.0],
            0.1,
            samples,
            7,
        )
        .unwrap()
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_abs_diff_eq!(softplus(0.0), 2.0f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(1000.0), 1000.0, epsilon = 1e-12);
        assert!(softplus(-1000.0) >= 0.0);
        assert_abs_diff_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(1000.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigmoid(-1000.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bounds_formula() {
        // rho = 0.1, standard normal features: (0.2, 0.2 + 1/4).
        let c = toy_cost(100);
        let (lo, hi) = c.bounds();
        assert_abs_diff_eq!(lo, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.45, epsilon = 1e-12);
    }

    #[test]
    fn gradient_at_zero_matches_analytic_form() {
        // At w = 0 the log-loss gradient is -(1/2) E[gamma h]. For standard
        // normal h and gamma = sign(h^T t), E[gamma h] = sqrt(2/pi) t/||t||,
        // so the gradient approaches -(1/2) sqrt(2/pi) t/||t||.
        let c = toy_cost(200_000);
        let g = c.gradient(&dvector![0.0, 0.0]);
        let expect = -0.5 * (2.0 / std::f64::consts::PI).sqrt();
        // Monte Carlo SE of each coordinate is about 1/sqrt(n).
        let se = 3.0 / (c.oracle_len() as f64).sqrt();
        assert!((g[0] - expect).abs() < se, "g0 = {}, expect {}", g[0], expect);
        assert!(g[1].abs() < se, "g1 = {}", g[1]);
    }

    #[test]
    fn gradient_matches_finite_differences_of_value() {
        let c = toy_cost(500);
        let w = dvector![0.3, -0.4];
        let g = c.gradient(&w);
        let h = 1e-6;
        for i in 0..2 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd = (c.value(&wp) - c.value(&wm)) / (2.0 * h);
            assert_abs_diff_eq!(fd, g[i], epsilon = 1e-6 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn hessian_is_between_declared_bounds() {
        let c = toy_cost(2000);
        let w = dvector![0.2, 0.1];
        let h = c.hessian(&w);
        let eig = h.symmetric_eigen();
        let (lo, _hi) = c.bounds();
        // The lower bound holds exactly; the upper holds in expectation, so
        // allow sampling slack above it.
        assert!(eig.eigenvalues.min() >= lo - 1e-12);
        assert!(eig.eigenvalues.max() <= 0.45 * 1.2);
    }

    #[test]
    fn minimizer_has_small_gradient() {
        let c = toy_cost(5000);
        let w = c.minimizer(1e-10, 50);
        assert!(c.gradient(&w).norm() <= 1e-10);
    }

    #[test]
    fn rejects_nonpositive_rho() {
        assert!(matches!(
            LogisticCost::new(
                FeatureDistribution::<f64>::standard(2),
                dvector![1.0, 0.0],
                0.0,
                10,
                0
            ),
            Err(CostError::RidgeNotPositive { .. })
        ));
    }

    #[test]
    fn frozen_oracle_is_deterministic() {
        let a = toy_cost(100);
        let b = toy_cost(100);
        let w = dvector![0.1, 0.2];
        assert_eq!(a.gradient(&w), b.gradient(&w));
    }

    #[test]
    fn stochastic_gradient_mean_approaches_population_gradient() {
        let c = toy_cost(200_000);
        let w = dvector![0.5, -0.2];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut mean = DVector::<f64>::zeros(2);
        let mut sq = DVector::<f64>::zeros(2);
        for _ in 0..n {
            let g = c.stochastic_gradient(&w, &mut rng);
            mean += &g;
            sq += g.component_mul(&g);
        }
        mean /= n as f64;
        sq /= n as f64;
        let exact = c.gradient(&w);
        for i in 0..2 {
            let var = (sq[i] - mean[i] * mean[i]).max(0.0);
            // Slack covers both the sampling error of the mean and the
            // oracle's own approximation error.
            let se = (var / n as f64).sqrt() + 3.0 / (c.oracle_len() as f64).sqrt();
            assert!(
                (mean[i] - exact[i]).abs() <= 4.0 * se,
                "coordinate {i}: mean {} vs exact {}",
                mean[i],
                exact[i]
            );
        }
    }
}
