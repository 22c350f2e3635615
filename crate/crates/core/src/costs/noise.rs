//! Gradient-noise moment envelopes and their empirical estimation.

use nalgebra::DVector;
use rand::Rng;

use super::{AgentCost, CostError};
use crate::scalar::{real, Scalar};

/// Moment envelope of one agent's gradient noise:
/// `E||s(w)||^2 <= beta_sq ||w||^2 + sigma_sq` and
/// `E||s(w)||^4 <= beta4 ||w||^4 + sigma4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfileEntry<T: Scalar> {
    pub beta_sq: T,
    pub sigma_sq: T,
    pub beta4: T,
    pub sigma4: T,
    /// True when a least-squares fit produced a negative coefficient that
    /// was clamped to zero.
    pub clamped: bool,
}

impl<T: Scalar> NoiseProfileEntry<T> {
    pub fn zero() -> Self {
        Self {
            beta_sq: T::zero(),
            sigma_sq: T::zero(),
            beta4: T::zero(),
            sigma4: T::zero(),
            clamped: false,
        }
    }
}

/// Per-agent gradient-noise moment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile<T: Scalar> {
    entries: Vec<NoiseProfileEntry<T>>,
}

impl<T: Scalar> NoiseProfile<T> {
    pub fn from_entries(entries: Vec<NoiseProfileEntry<T>>) -> Result<Self, CostError> {
        for e in &entries {
            if e.beta_sq < T::zero()
                || e.sigma_sq < T::zero()
                || e.beta4 < T::zero()
                || e.sigma4 < T::zero()
            {
                return Err(CostError::NegativeNoiseParameter);
            }
        }
        Ok(Self { entries })
    }

    /// Envelope of all-zero noise for `n` agents.
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: vec![NoiseProfileEntry::zero(); n],
        }
    }

    /// Exact declared envelopes of a cost set. Logistic costs have no
    /// closed-form envelope, so their entries fall back to empirical
    /// estimation via [`estimate_noise_profile`]; this returns `None` if
    /// any agent lacks a declared envelope.
    pub fn declared(costs: &[AgentCost<T>]) -> Option<Self> {
        let entries: Option<Vec<_>> = costs.iter().map(|c| c.declared_noise()).collect();
        entries.map(|entries| Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, k: usize) -> &NoiseProfileEntry<T> {
        &self.entries[k]
    }

    pub fn entries(&self) -> &[NoiseProfileEntry<T>] {
        &self.entries
    }

    pub fn beta_sq(&self, k: usize) -> T {
        self.entries[k].beta_sq
    }

    pub fn sigma_sq(&self, k: usize) -> T {
        self.entries[k].sigma_sq
    }

    pub fn beta4(&self, k: usize) -> T {
        self.entries[k].beta4
    }

    pub fn sigma4(&self, k: usize) -> T {
        self.entries[k].sigma4
    }
}

/// Two-parameter least squares `y ~ slope * x + intercept`.
fn fit_line<T: Scalar>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = real::<T>(xs.len() as f64);
    let x_mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let y_mean = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    (slope, y_mean - slope * x_mean)
}

/// Estimate one agent's noise envelope by sampling the stochastic gradient
/// at the probe points and regressing the sampled second moment against
/// `||w||^2` (and the fourth moment against `||w||^4`). Negative fitted
/// coefficients are clamped to zero and flagged. Probe points must include
/// at least two distinct norms.
pub fn estimate_noise_profile<T: Scalar, R: Rng + ?Sized>(
    cost: &AgentCost<T>,
    probe_points: &[DVector<T>],
    n_samples: usize,
    rng: &mut R,
) -> Result<NoiseProfileEntry<T>, CostError> {
    if probe_points.len() < 2 {
        return Err(CostError::DegenerateProbeSet);
    }
    let norms: Vec<T> = probe_points.iter().map(|w| w.norm_squared()).collect();
    let spread = norms
        .iter()
        .fold(T::zero(), |a, &x| a.max(x))
        - norms.iter().fold(norms[0], |a, &x| a.min(x));
    if spread <= real(1e-12) {
        return Err(CostError::DegenerateProbeSet);
    }

    let mut x2 = Vec::with_capacity(probe_points.len());
    let mut y2 = Vec::with_capacity(probe_points.len());
    let mut x4 = Vec::with_capacity(probe_points.len());
    let mut y4 = Vec::with_capacity(probe_points.len());
    let n = real::<T>(n_samples as f64);
    for w in probe_points {
        let exact = cost.gradient(w);
        let mut m2 = T::zero();
        let mut m4 = T::zero();
        for _ in 0..n_samples {
            let s = cost.stochastic_gradient(w, rng) - &exact;
            let sq = s.norm_squared();
            m2 += sq;
            m4 += sq * sq;
        }
        x2.push(w.norm_squared());
        y2.push(m2 / n);
        x4.push(w.norm_squared() * w.norm_squared());
        y4.push(m4 / n);
    }

    let (beta_sq, sigma_sq) = fit_line(&x2, &y2);
    let (beta4, sigma4) = fit_line(&x4, &y4);
    let mut clamped = false;
    let mut clamp = |v: T| {
        if v < T::zero() {
            clamped = true;
            T::zero()
        } else {
            v
        }
    };
    let beta_sq = clamp(beta_sq);
    let sigma_sq = clamp(sigma_sq);
    let beta4 = clamp(beta4);
    let sigma4 = clamp(sigma4);
    Ok(NoiseProfileEntry {
        beta_sq,
        sigma_sq,
        beta4,
        sigma4,
        clamped,
    })
}
