//! Per-agent risk models: exact and stochastic gradient oracles, Hessian
//! bounds, and gradient-noise moment accounting.

mod logistic;
mod noise;
mod quadratic;

pub use logistic::{
    per_sample_gradient, FeatureDistribution, LogisticCost, DEFAULT_ORACLE_SAMPLES,
};
pub use noise::{estimate_noise_profile, NoiseProfile, NoiseProfileEntry};
pub use quadratic::QuadraticCost;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hessian is not symmetric at ({i}, {j})")]
    HessianNotSymmetric { i: usize, j: usize },

    #[error("hessian is not positive definite (lambda_min = {lambda_min:e})")]
    HessianNotPositiveDefinite { lambda_min: f64 },

    #[error("symmetric eigensolver failed to converge")]
    EigenSolverFailed,

    #[error("noise parameters must be nonnegative")]
    NegativeNoiseParameter,

    #[error("ridge coefficient must be positive for strong convexity, got {rho}")]
    RidgeNotPositive { rho: f64 },

    #[error("feature covariance is not positive definite")]
    CovarianceNotPositiveDefinite,

    #[error("oracle sample size must be positive")]
    EmptyOracleSample,

    #[error("probe set is degenerate: need at least two probes with distinct norms")]
    DegenerateProbeSet,
}

/// One agent's risk model.
#[derive(Debug, Clone)]
pub enum AgentCost<T: Scalar> {
    Quadratic(QuadraticCost<T>),
    Logistic(LogisticCost<T>),
}

impl<T: Scalar> AgentCost<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(c) => c.dim(),
            Self::Logistic(c) => c.dim(),
        }
    }

    /// Risk value `J(w)`. Exact for quadratic costs; evaluated on the frozen
    /// oracle sample for logistic costs.
    pub fn value(&self, w: &DVector<T>) -> T {
        match self {
            Self::Quadratic(c) => c.value(w),
            Self::Logistic(c) => c.value(w),
        }
    }

    /// Exact gradient (deterministic high-accuracy approximation for
    /// logistic costs).
    pub fn gradient(&self, w: &DVector<T>) -> DVector<T> {
        match self {
            Self::Quadratic(c) => c.gradient(w),
            Self::Logistic(c) => c.gradient(w),
        }
    }

    pub fn hessian(&self, w: &DVector<T>) -> DMatrix<T> {
        match self {
            Self::Quadratic(c) => c.hessian_matrix().clone(),
            Self::Logistic(c) => c.hessian(w),
        }
    }

    /// Uniform Hessian eigenvalue bounds `(lambda_min, lambda_max)`.
    pub fn hessian_bounds(&self) -> (T, T) {
        match self {
            Self::Quadratic(c) => c.bounds(),
            Self::Logistic(c) => c.bounds(),
        }
    }

    /// One stochastic-gradient draw satisfying the conditional
    /// unbiasedness and moment-envelope conditions.
    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, w: &DVector<T>, rng: &mut R) -> DVector<T> {
        match self {
            Self::Quadratic(c) => c.stochastic_gradient(w, rng),
            Self::Logistic(c) => c.stochastic_gradient(w, rng),
        }
    }

    /// Minimizer of the individual risk.
    pub fn minimizer(&self) -> DVector<T> {
        match self {
            Self::Quadratic(c) => c.minimizer().clone(),
            Self::Logistic(c) => c.minimizer(real(1e-12), 100),
        }
    }

    /// Exact declared noise envelope, when the model admits one in closed
    /// form (quadratic with the declared Gaussian noise model). Logistic
    /// single-sample oracles require empirical estimation instead.
    pub fn declared_noise(&self) -> Option<NoiseProfileEntry<T>> {
        match self {
            Self::Quadratic(c) => Some(c.declared_noise()),
            Self::Logistic(_) => None,
        }
    }

    /// Exact Hessian Lipschitz constant when known: a constant Hessian has
    /// `kappa_d = 0`. Logistic costs need sampling-based estimation.
    pub fn kappa_d_exact(&self) -> Option<T> {
        match self {
            Self::Quadratic(_) => Some(T::zero()),
            Self::Logistic(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy_quadratic(beta_sq: f64, sigma_sq: f64) -> AgentCost<f64> {
        AgentCost::Quadratic(
            QuadraticCost::new(DMatrix::identity(2, 2), dvector![1.0, -1.0])
                .unwrap()
                .with_noise(beta_sq, sigma_sq)
                .unwrap(),
        )
    }

    #[test]
    fn quadratic_hessian_is_constant_in_w() {
        let c = noisy_quadratic(0.0, 0.0);
        let h1 = c.hessian(&dvector![0.0, 0.0]);
        let h2 = c.hessian(&dvector![5.0, -3.0]);
        assert_eq!(h1, h2);
        assert_eq!(c.kappa_d_exact(), Some(0.0));
    }

    #[test]
    fn conditional_unbiasedness_at_fixed_state() {
        let c = noisy_quadratic(0.2, 0.4);
        let w = dvector![0.7, 0.3];
        let exact = c.gradient(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000usize;
        let mut mean = DVector::<f64>::zeros(2);
        let mut sq = DVector::<f64>::zeros(2);
        for _ in 0..n {
            let s = c.stochastic_gradient(&w, &mut rng) - &exact;
            mean += &s;
            sq += s.component_mul(&s);
        }
        mean /= n as f64;
        sq /= n as f64;
        for i in 0..2 {
            let sd = (sq[i] - mean[i] * mean[i]).max(0.0).sqrt();
            assert!(
                mean[i].abs() <= 4.0 * sd / (n as f64).sqrt(),
                "noise mean {} exceeds 4 SE",
                mean[i]
            );
        }
    }

    #[test]
    fn second_moment_envelope_holds_with_equality_slack() {
        let c = noisy_quadratic(0.25, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000usize;
        for w in [
            dvector![0.0, 0.0],
            dvector![1.0, 0.0],
            dvector![1.0, 1.0],
            dvector![-2.0, 0.5],
            dvector![3.0, 3.0],
        ] {
            let exact = c.gradient(&w);
            let mut m2 = 0.0;
            for _ in 0..n {
                m2 += (c.stochastic_gradient(&w, &mut rng) - &exact).norm_squared();
            }
            m2 /= n as f64;
            let envelope = 0.25 * w.norm_squared() + 0.5;
            assert!(
                (m2 - envelope).abs() / envelope < 0.05,
                "sampled second moment {m2} vs envelope {envelope}"
            );
        }
    }

    #[test]
    fn noise_variance_matches_sigma_when_beta_zero() {
        let c = noisy_quadratic(0.0, 0.8);
        let w = dvector![2.0, 1.0];
        let exact = c.gradient(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 100_000usize;
        let mut m2 = 0.0;
        for _ in 0..n {
            m2 += (c.stochastic_gradient(&w, &mut rng) - &exact).norm_squared();
        }
        m2 /= n as f64;
        assert!((m2 - 0.8).abs() / 0.8 < 0.05, "second moment {m2}");
    }

    #[test]
    fn cross_agent_noise_is_uncorrelated() {
        let c1 = noisy_quadratic(0.1, 0.3);
        let c2 = noisy_quadratic(0.2, 0.6);
        let w1 = dvector![1.0, 0.0];
        let w2 = dvector![0.0, 1.0];
        let g1 = c1.gradient(&w1);
        let g2 = c2.gradient(&w2);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 50_000usize;
        let mut cross = DMatrix::<f64>::zeros(2, 2);
        let mut sq = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let s1 = c1.stochastic_gradient(&w1, &mut rng) - &g1;
            let s2 = c2.stochastic_gradient(&w2, &mut rng) - &g2;
            let outer = &s1 * s2.transpose();
            sq += outer.component_mul(&outer);
            cross += outer;
        }
        cross /= n as f64;
        sq /= n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let sd = (sq[(i, j)] - cross[(i, j)] * cross[(i, j)]).max(0.0).sqrt();
                assert!(
                    cross[(i, j)].abs() <= 4.0 * sd / (n as f64).sqrt(),
                    "cross-covariance entry ({i},{j}) = {}",
                    cross[(i, j)]
                );
            }
        }
    }

    #[test]
    fn logistic_noise_profile_at_origin_matches_sample_variance() {
        let cost = AgentCost::Logistic(
            LogisticCost::new(
                FeatureDistribution::standard(2),
                dvector![1.0, 0.5],
                0.05,
                20_000,
                3,
            )
            .unwrap(),
        );
        // Direct sample variance of per-sample gradients at w = 0.
        let w0 = dvector![0.0, 0.0];
        let exact = cost.gradient(&w0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50_000usize;
        let mut m2 = 0.0;
        for _ in 0..n {
            m2 += (cost.stochastic_gradient(&w0, &mut rng) - &exact).norm_squared();
        }
        m2 /= n as f64;

        // The fitted intercept at ||w||^2 = 0 estimates the same quantity.
        let probes = vec![
            dvector![0.0, 0.0],
            dvector![0.5, 0.0],
            dvector![0.0, 1.0],
            dvector![1.0, 1.0],
        ];
        let mut rng2 = ChaCha8Rng::seed_from_u64(10);
        let entry = estimate_noise_profile(&cost, &probes, 50_000, &mut rng2).unwrap();
        assert!(
            (entry.sigma_sq - m2).abs() / m2 < 0.15,
            "sigma_sq {} vs direct variance {m2}",
            entry.sigma_sq
        );
    }
}
