//! Element-wise moment bound recursions.
//!
//! With `C = I - mu eta L` (entries nonnegative and rows summing to one
//! under the combination-matrix limits), `gamma_k` the per-agent contraction
//! factors, and the gradient-noise envelopes `(beta_k^2, sigma_k^2,
//! beta4_k, sigma4_k)`, the second, fourth, and squared-mean error moments
//! relative to the fixed point obey, element-wise:
//!
//! ```text
//! MSP_i <= C G MSP_{i-1} + mu^2 C b
//! MFP_i <= C G' MFP_{i-1} + mu^2 C B MSP_{i-1} + mu^4 C b'
//! SMP_i <= C G'' SMP_{i-1} + mu^2 C (I-G'')^{-1} B' MSP_{i-1}
//!                          + (mu^2 kappa'^2 / 2) C (I-G'')^{-1} MFP_{i-1}
//! G   = diag{gamma_k^2 + 3 mu^2 beta_k^2}
//! b   = col{sigma_k^2 + 3 beta_k^2 ||w_eta_k||^2 + 3 beta_k^2 ||w_eta_k - w_inf_k||^2}
//! G'  = diag{gamma_k^4 + 24 mu^2 gamma_k^2 beta_k^2 + 81 mu^4 beta4_k}
//! B   = diag{8 gamma_k^2 b_k},   b' = col{3 sigma4_k + 81 beta4_k (||w_eta_k||^4 + ||w_eta_k - w_inf_k||^4)}
//! G'' = diag{gamma_k},           B' = diag{2 kappa'^2 ||w_eta_k - w_inf_k||^2}
//! ```
//!
//! The recursions are evaluated exactly as written (including the left
//! multiplication by `C`), seeded from explicit initial moments, so a Monte
//! Carlo estimate started from the same initial state must stay below them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnalysisError;
use crate::costs::{AgentCost, NoiseProfile};
use crate::diffusion::{check_costs, contraction_factors, AlgorithmParams};
use crate::graph::{Network, NetworkState};
use crate::linalg::{spectral_norm, spectral_radius_sym_times_diag};
use crate::scalar::{real, Scalar};

/// Initial moment vectors (per agent) seeding the recursions.
#[derive(Debug, Clone)]
pub struct MomentInit<T: Scalar> {
    pub msp: DVector<T>,
    pub mfp: DVector<T>,
    pub smp: DVector<T>,
}

impl<T: Scalar> MomentInit<T> {
    /// Start exactly at the fixed point: all moments zero.
    pub fn zero(n: usize) -> Self {
        Self {
            msp: DVector::zeros(n),
            mfp: DVector::zeros(n),
            smp: DVector::zeros(n),
        }
    }

    /// Deterministic start at `x0`: the moments are the exact per-agent
    /// squared and fourth-power distances.
    pub fn deterministic(w_inf: &NetworkState<T>, x0: &NetworkState<T>) -> Self {
        let n = w_inf.n_agents();
        let mut msp = DVector::zeros(n);
        let mut mfp = DVector::zeros(n);
        for k in 0..n {
            let d = (w_inf.block(k) - x0.block(k)).norm_squared();
            msp[k] = d;
            mfp[k] = d * d;
        }
        Self {
            smp: msp.clone(),
            msp,
            mfp,
        }
    }

    /// Start from the standard normal initial state: exact moments of
    /// `e = w_inf - w_0` with `w_0 ~ N(0, I_M)`.
    pub fn gaussian_standard(w_inf: &NetworkState<T>) -> Self {
        let n = w_inf.n_agents();
        let m = real::<T>(w_inf.agent_dim() as f64);
        let mut msp = DVector::zeros(n);
        let mut mfp = DVector::zeros(n);
        let mut smp = DVector::zeros(n);
        for k in 0..n {
            let mean_sq = w_inf.block(k).norm_squared();
            let e2 = mean_sq + m;
            msp[k] = e2;
            // Var ||e||^2 = 4 ||mean||^2 + 2 M for unit covariance.
            mfp[k] = e2 * e2 + real::<T>(4.0) * mean_sq + real::<T>(2.0) * m;
            smp[k] = mean_sq;
        }
        Self { msp, mfp, smp }
    }
}

/// Configuration of the Hessian-Lipschitz constant estimate.
///
/// `kappa' = max{kappa_d, (lambda_max - lambda_min) / epsilon}` per agent,
/// maximized over agents. `kappa_d` is zero for constant Hessians; for
/// other costs it is estimated by sampling Hessian differences at `probes`
/// random perturbations of norm at most `probe_radius` around the reference
/// point and taking the worst ratio times `safety`.
#[derive(Debug, Clone, Copy)]
pub struct KappaConfig<T: Scalar> {
    /// Assumption radius `epsilon` in the fallback term.
    pub epsilon: T,
    pub probe_radius: T,
    pub probes: usize,
    pub safety: T,
    pub seed: u64,
}

impl<T: Scalar> Default for KappaConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::one(),
            probe_radius: real(0.1),
            probes: 100,
            safety: real(1.5),
            seed: 0x6b61_7070,
        }
    }
}

/// Estimate the scalar `kappa'` used by the squared-mean recursion.
pub fn kappa_d_prime<T: Scalar>(
    costs: &[AgentCost<T>],
    w_eta: &NetworkState<T>,
    cfg: &KappaConfig<T>,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = T::zero();
    for (k, cost) in costs.iter().enumerate() {
        let kappa_d = cost.kappa_d_exact().unwrap_or_else(|| {
            let reference = w_eta.block_owned(k);
            let h_ref = cost.hessian(&reference);
            let mut max_ratio = T::zero();
            for _ in 0..cfg.probes {
                let mut delta =
                    DVector::from_fn(cost.dim(), |_, _| T::standard_normal(&mut rng));
                let norm = delta.norm();
                if norm == T::zero() {
                    continue;
                }
                let radius = cfg.probe_radius * T::unit_uniform(&mut rng);
                delta *= radius / norm;
                let d_norm = delta.norm();
                if d_norm == T::zero() {
                    continue;
                }
                let h = cost.hessian(&(&reference + &delta));
                max_ratio = max_ratio.max(spectral_norm(&(h - &h_ref)) / d_norm);
            }
            max_ratio * cfg.safety
        });
        let (lo, hi) = cost.hessian_bounds();
        worst = worst.max(kappa_d.max((hi - lo) / cfg.epsilon));
    }
    worst
}

/// All coefficients of the three recursions.
#[derive(Debug, Clone)]
pub struct BoundParams<T: Scalar> {
    /// Per-agent contraction factors `gamma_k`.
    pub gamma: DVector<T>,
    /// Diagonal of `G`.
    pub g: DVector<T>,
    /// Driving vector `b`.
    pub b: DVector<T>,
    /// Diagonal of `G'`.
    pub g_fourth: DVector<T>,
    /// Diagonal of `B` (couples the fourth moment to the second).
    pub b_coupling: DVector<T>,
    /// Driving vector `b'`.
    pub b_fourth: DVector<T>,
    /// Diagonal of `B'`.
    pub b_mean: DVector<T>,
    /// Scalar Lipschitz constant `kappa'`.
    pub kappa_d_prime: T,
    /// Per-agent decay margins `zeta_k` with `||G||_inf = 1 - mu min_k zeta_k`.
    pub zeta: DVector<T>,
    /// Spectral radii of `C G`, `C G'`, `C G''`.
    pub rho_msp: T,
    pub rho_mfp: T,
    pub rho_smp: T,
    /// Sufficient step-size limit for stability of the `MSP` recursion.
    pub mu_msp_limit: T,
}

impl<T: Scalar> BoundParams<T> {
    /// The recursion diverges when any spectral radius reaches one.
    pub fn divergent(&self) -> bool {
        self.rho_msp >= T::one() || self.rho_mfp >= T::one() || self.rho_smp >= T::one()
    }
}

/// Assemble the recursion coefficients.
#[allow(clippy::too_many_arguments)]
pub fn bound_params<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    noise: &NoiseProfile<T>,
    params: &AlgorithmParams<T>,
    w_eta: &NetworkState<T>,
    w_inf: &NetworkState<T>,
    kappa: &KappaConfig<T>,
) -> Result<BoundParams<T>, AnalysisError> {
    check_costs(network, costs)?;
    let n = network.n_agents();
    let mu = params.mu;
    let three = real::<T>(3.0);

    let gamma = DVector::from_vec(contraction_factors(costs, mu));
    let kappa_prime = kappa_d_prime(costs, w_eta, kappa);

    let mut g = DVector::zeros(n);
    let mut b = DVector::zeros(n);
    let mut g4 = DVector::zeros(n);
    let mut b_coupling = DVector::zeros(n);
    let mut b4 = DVector::zeros(n);
    let mut b_mean = DVector::zeros(n);
    let mut zeta = DVector::zeros(n);
    let mut mu_limit = T::max_value().unwrap();

    for k in 0..n {
        let beta_sq = noise.beta_sq(k);
        let sigma_sq = noise.sigma_sq(k);
        let beta4 = noise.beta4(k);
        let sigma4 = noise.sigma4(k);
        let gk = gamma[k];
        let target_sq = w_eta.block(k).norm_squared();
        let gap_sq = (w_eta.block(k) - w_inf.block(k)).norm_squared();

        g[k] = gk * gk + three * mu * mu * beta_sq;
        b[k] = sigma_sq + three * beta_sq * target_sq + three * beta_sq * gap_sq;

        g4[k] = gk.powi(4)
            + real::<T>(24.0) * mu * mu * gk * gk * beta_sq
            + real::<T>(81.0) * mu.powi(4) * beta4;
        b_coupling[k] = real::<T>(8.0) * gk * gk * b[k];
        b4[k] = three * sigma4
            + real::<T>(81.0) * beta4 * (target_sq * target_sq + gap_sq * gap_sq);

        b_mean[k] = real::<T>(2.0) * kappa_prime * kappa_prime * gap_sq;

        let (lo, hi) = costs[k].hessian_bounds();
        zeta[k] = (real::<T>(2.0) * lo - mu * lo * lo - three * mu * beta_sq)
            .min(real::<T>(2.0) * hi - mu * hi * hi - three * mu * beta_sq);
        let lim_lo = real::<T>(2.0) * lo / (lo * lo + three * beta_sq);
        let lim_hi = real::<T>(2.0) * hi / (hi * hi + three * beta_sq);
        mu_limit = mu_limit.min(lim_lo.min(lim_hi));
    }

    let c = combination_matrix_small(network, params);
    let rho_msp = spectral_radius_sym_times_diag(&c, &g);
    let rho_mfp = spectral_radius_sym_times_diag(&c, &g4);
    let rho_smp = spectral_radius_sym_times_diag(&c, &gamma);

    Ok(BoundParams {
        gamma,
        g,
        b,
        g_fourth: g4,
        b_coupling,
        b_fourth: b4,
        b_mean,
        kappa_d_prime: kappa_prime,
        zeta,
        rho_msp,
        rho_mfp,
        rho_smp,
        mu_msp_limit: mu_limit,
    })
}

/// `C = I_N - mu eta L` acting on per-agent scalars (not Kronecker-expanded).
fn combination_matrix_small<T: Scalar>(
    network: &Network<T>,
    params: &AlgorithmParams<T>,
) -> DMatrix<T> {
    DMatrix::identity(network.n_agents(), network.n_agents())
        - network.laplacian() * params.mu_eta()
}

/// Evaluated bound recursions.
#[derive(Debug, Clone)]
pub struct BoundTrajectory<T: Scalar> {
    /// `msp[i]`, `mfp[i]`, `smp[i]` are the bound vectors at iteration `i`
    /// (index 0 holds the initial moments).
    pub msp: Vec<DVector<T>>,
    pub mfp: Vec<DVector<T>>,
    pub smp: Vec<DVector<T>>,
    pub params: BoundParams<T>,
    /// Set when any recursion's spectral radius is at or above one; the
    /// trajectories are still evaluated.
    pub divergent: bool,
}

/// Fixed points of the stable recursions.
#[derive(Debug, Clone)]
pub struct BoundFixedPoints<T: Scalar> {
    pub msp: DVector<T>,
    pub mfp: DVector<T>,
    pub smp: DVector<T>,
}

impl<T: Scalar> BoundTrajectory<T> {
    pub fn n_iter(&self) -> usize {
        self.msp.len() - 1
    }

    /// Solve the stationary equations of the three recursions (requires all
    /// spectral radii below one).
    pub fn fixed_points(
        &self,
        network: &Network<T>,
        params: &AlgorithmParams<T>,
    ) -> Option<BoundFixedPoints<T>> {
        if self.divergent {
            return None;
        }
        let p = &self.params;
        let n = network.n_agents();
        let c = combination_matrix_small(network, params);
        let identity = DMatrix::<T>::identity(n, n);
        let mu_sq = params.mu * params.mu;

        let solve = |g_diag: &DVector<T>, rhs: &DVector<T>| -> Option<DVector<T>> {
            let mut system = identity.clone();
            for i in 0..n {
                for j in 0..n {
                    system[(i, j)] -= c[(i, j)] * g_diag[j];
                }
            }
            system.lu().solve(rhs)
        };

        let msp = solve(&p.g, &(&c * &p.b * mu_sq))?;
        let mfp_rhs = &c * (p.b_coupling.component_mul(&msp)) * mu_sq
            + &c * &p.b_fourth * (mu_sq * mu_sq);
        let mfp = solve(&p.g_fourth, &mfp_rhs)?;

        let inv_one_minus_gamma =
            DVector::from_fn(n, |k, _| T::one() / (T::one() - p.gamma[k]));
        let smp_rhs = &c
            * inv_one_minus_gamma
                .component_mul(&p.b_mean)
                .component_mul(&msp)
            * mu_sq
            + &c * inv_one_minus_gamma.component_mul(&mfp)
                * (mu_sq * p.kappa_d_prime * p.kappa_d_prime / real::<T>(2.0));
        let smp = solve(&p.gamma, &smp_rhs)?;

        Some(BoundFixedPoints { msp, mfp, smp })
    }
}

/// Evaluate the three bound recursions for `n_iter` iterations from the
/// given initial moments. A spectral radius at or above one flags the
/// result divergent but the vectors are still produced.
#[allow(clippy::too_many_arguments)]
pub fn bound_recursions<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    noise: &NoiseProfile<T>,
    params: &AlgorithmParams<T>,
    w_eta: &NetworkState<T>,
    w_inf: &NetworkState<T>,
    n_iter: usize,
    init: &MomentInit<T>,
    kappa: &KappaConfig<T>,
) -> Result<BoundTrajectory<T>, AnalysisError> {
    let bp = bound_params(network, costs, noise, params, w_eta, w_inf, kappa)?;
    let n = network.n_agents();
    let c = combination_matrix_small(network, params);
    let mu_sq = params.mu * params.mu;
    let inv_one_minus_gamma =
        DVector::from_fn(n, |k, _| T::one() / (T::one() - bp.gamma[k]));
    let kappa_half = bp.kappa_d_prime * bp.kappa_d_prime / real::<T>(2.0);

    let mut msp = Vec::with_capacity(n_iter + 1);
    let mut mfp = Vec::with_capacity(n_iter + 1);
    let mut smp = Vec::with_capacity(n_iter + 1);
    msp.push(init.msp.clone());
    mfp.push(init.mfp.clone());
    smp.push(init.smp.clone());

    let c_b = (&c * &bp.b) * mu_sq;
    let c_b4 = (&c * &bp.b_fourth) * (mu_sq * mu_sq);

    for i in 1..=n_iter {
        let prev_msp = &msp[i - 1];
        let prev_mfp = &mfp[i - 1];
        let prev_smp = &smp[i - 1];

        let next_msp = &c * bp.g.component_mul(prev_msp) + &c_b;
        let next_mfp = &c * bp.g_fourth.component_mul(prev_mfp)
            + &c * bp.b_coupling.component_mul(prev_msp) * mu_sq
            + &c_b4;
        let next_smp = &c * bp.gamma.component_mul(prev_smp)
            + &c
                * inv_one_minus_gamma
                    .component_mul(&bp.b_mean)
                    .component_mul(prev_msp)
                * mu_sq
            + &c * inv_one_minus_gamma.component_mul(prev_mfp) * (mu_sq * kappa_half);

        msp.push(next_msp);
        mfp.push(next_mfp);
        smp.push(next_smp);
    }

    let divergent = bp.divergent();
    Ok(BoundTrajectory {
        msp,
        mfp,
        smp,
        params: bp,
        divergent,
    })
}
