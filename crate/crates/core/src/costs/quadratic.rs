//! Quadratic agent risk: `J(w) = 1/2 (w - w_o)^T H (w - w_o)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::noise::NoiseProfileEntry;
use super::CostError;
use crate::scalar::{real, Scalar};

/// Strongly convex quadratic cost with a constant Hessian.
///
/// The stochastic-gradient oracle adds zero-mean Gaussian noise with
/// covariance `(beta_sq ||w||^2 + sigma_sq) / M * I`, so the second-moment
/// envelope `beta_sq ||w||^2 + sigma_sq` holds with equality and bound
/// tightness is observable.
#[derive(Debug, Clone)]
pub struct QuadraticCost<T: Scalar> {
    hessian: DMatrix<T>,
    minimizer: DVector<T>,
    lambda_min: T,
    lambda_max: T,
    beta_sq: T,
    sigma_sq: T,
}

impl<T: Scalar> QuadraticCost<T> {
    /// Noiseless quadratic cost. Rejects a Hessian that is not symmetric
    /// positive definite.
    pub fn new(hessian: DMatrix<T>, minimizer: DVector<T>) -> Result<Self, CostError> {
        let m = minimizer.len();
        if hessian.nrows() != m || hessian.ncols() != m {
            return Err(CostError::DimensionMismatch {
                expected: m,
                got: hessian.nrows(),
            });
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if (hessian[(i, j)] - hessian[(j, i)]).abs()
                    > real::<T>(1e-12) * (T::one() + hessian[(i, j)].abs())
                {
                    return Err(CostError::HessianNotSymmetric { i, j });
                }
            }
        }
        let eig = hessian
            .clone()
            .try_symmetric_eigen(T::default_epsilon() * real(4.0), 10_000)
            .ok_or(CostError::EigenSolverFailed)?;
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if lambda_min <= T::zero() {
            return Err(CostError::HessianNotPositiveDefinite {
                lambda_min: lambda_min.as_f64(),
            });
        }
        Ok(Self {
            hessian,
            minimizer,
            lambda_min,
            lambda_max,
            beta_sq: T::zero(),
            sigma_sq: T::zero(),
        })
    }

    /// Isotropic quadratic `J(w) = h/2 ||w - w_o||^2`.
    pub fn isotropic(dim: usize, curvature: T, minimizer: DVector<T>) -> Result<Self, CostError> {
        Self::new(DMatrix::identity(dim, dim) * curvature, minimizer)
    }

    /// Attach the gradient-noise model parameters (both nonnegative).
    pub fn with_noise(mut self, beta_sq: T, sigma_sq: T) -> Result<Self, CostError> {
        if beta_sq < T::zero() || sigma_sq < T::zero() {
            return Err(CostError::NegativeNoiseParameter);
        }
        self.beta_sq = beta_sq;
        self.sigma_sq = sigma_sq;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.minimizer.len()
    }

    pub fn hessian_matrix(&self) -> &DMatrix<T> {
        &self.hessian
    }

    pub fn minimizer(&self) -> &DVector<T> {
        &self.minimizer
    }

    pub fn bounds(&self) -> (T, T) {
        (self.lambda_min, self.lambda_max)
    }

    pub fn noise_params(&self) -> (T, T) {
        (self.beta_sq, self.sigma_sq)
    }

    pub fn value(&self, w: &DVector<T>) -> T {
        let d = w - &self.minimizer;
        (d.transpose() * &self.hessian * &d)[(0, 0)] / real(2.0)
    }

    pub fn gradient(&self, w: &DVector<T>) -> DVector<T> {
        &self.hessian * (w - &self.minimizer)
    }

    /// Exact gradient plus one draw of the declared Gaussian noise model.
    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, w: &DVector<T>, rng: &mut R) -> DVector<T> {
        let mut g = self.gradient(w);
        let variance = (self.beta_sq * w.norm_squared() + self.sigma_sq) / real(self.dim() as f64);
        if variance > T::zero() {
            let std = variance.sqrt();
            for x in g.iter_mut() {
                *x += std * T::standard_normal(rng);
            }
        }
        g
    }

    /// Exact moment envelope of the noise model. The fourth-moment envelope
    /// uses `E||s||^4 = (1 + 2/M) (beta_sq ||w||^2 + sigma_sq)^2` together
    /// with `(a + b)^2 <= 2a^2 + 2b^2`.
    pub fn declared_noise(&self) -> NoiseProfileEntry<T> {
        let m = real::<T>(self.dim() as f64);
        let kurt = real::<T>(2.0) * (T::one() + real::<T>(2.0) / m);
        NoiseProfileEntry {
            beta_sq: self.beta_sq,
            sigma_sq: self.sigma_sq,
            beta4: kurt * self.beta_sq * self.beta_sq,
            sigma4: kurt * self.sigma_sq * self.sigma_sq,
            clamped: false,
        }
    }
}
