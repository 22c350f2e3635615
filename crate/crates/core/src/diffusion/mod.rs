//! The multitask diffusion recursion and its stability machinery.
//!
//! One iteration maps the stacked state `W` to
//! `(I - mu eta (L (x) I)) (W - mu col{grad_k})`: an adapt step (per-agent
//! stochastic gradient descent) followed by a combine step (weighted
//! neighborhood averaging). The combine step can equivalently be written
//! through the doubly stochastic combination matrix `C = I - mu eta L`; both
//! forms are implemented and agree to machine precision.

mod fixed_point;
pub(crate) mod run;

pub use fixed_point::{fixed_point, fixed_point_direct, FixedPoint};
pub use run::{global_cost, run, Init, RunOptions, Trajectory};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::costs::{AgentCost, NoiseProfile};
use crate::graph::{Network, NetworkState};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("step size must be positive, got {mu}")]
    NonPositiveStepSize { mu: f64 },

    #[error("regularization strength must be nonnegative, got {eta}")]
    NegativeRegularization { eta: f64 },

    #[error("{limit} violated: mu*eta = {value:.6e} exceeds {bound:.6e}")]
    MuEtaLimitViolated {
        limit: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("contraction step-size limit violated: mu = {value:.6e} must be below {bound:.6e}")]
    MuLimitViolated { value: f64, bound: f64 },

    #[error("expected {expected} agent costs, got {got}")]
    CostCountMismatch { expected: usize, got: usize },

    #[error("agent {agent} cost dimension {got} differs from {expected}")]
    CostDimMismatch {
        agent: usize,
        expected: usize,
        got: usize,
    },

    #[error("state diverged (NaN or infinity) at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error(
        "fixed-point iteration did not reach tol {tol:e} within {max_iter} iterations \
         (last step {last_step:e}, last contraction ratio {last_ratio})"
    )]
    FixedPointNotConverged {
        max_iter: usize,
        tol: f64,
        last_step: f64,
        last_ratio: f64,
    },

    #[error(
        "contraction violated on pair {pair}: ratio {ratio} exceeds gamma {gamma}"
    )]
    ContractionViolated { pair: usize, ratio: f64, gamma: f64 },

    #[error("operation requires quadratic costs at every agent")]
    RequiresQuadraticCosts,
}

/// Step size and regularization strength of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmParams<T: Scalar> {
    pub mu: T,
    pub eta: T,
}

impl<T: Scalar> AlgorithmParams<T> {
    pub fn new(mu: T, eta: T) -> Result<Self, DiffusionError> {
        if mu <= T::zero() {
            return Err(DiffusionError::NonPositiveStepSize { mu: mu.as_f64() });
        }
        if eta < T::zero() {
            return Err(DiffusionError::NegativeRegularization { eta: eta.as_f64() });
        }
        Ok(Self { mu, eta })
    }

    pub fn mu_eta(&self) -> T {
        self.mu * self.eta
    }
}

/// Check that the cost list matches the network; returns the agent dimension.
pub fn check_costs<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
) -> Result<usize, DiffusionError> {
    if costs.len() != network.n_agents() {
        return Err(DiffusionError::CostCountMismatch {
            expected: network.n_agents(),
            got: costs.len(),
        });
    }
    let dim = costs[0].dim();
    for (k, c) in costs.iter().enumerate() {
        if c.dim() != dim {
            return Err(DiffusionError::CostDimMismatch {
                agent: k,
                expected: dim,
                got: c.dim(),
            });
        }
    }
    Ok(dim)
}

/// The step-size limits governing a configuration:
///
/// - `mu_eta_spectral`: `mu*eta <= 2/lambda_max(L)` keeps the combination
///   matrix's spectral radius at one;
/// - `mu_eta_positivity`: `mu*eta <= min_k 1/deg_k` keeps its entries
///   nonnegative;
/// - `mu_contraction`: `mu < min_k 2/lambda_{k,max}` makes the noiseless
///   iteration a contraction;
/// - `mu_msp`: the tighter noise-aware limit
///   `mu < min_k min{2 l_min/(l_min^2 + 3 beta^2), 2 l_max/(l_max^2 + 3 beta^2)}`
///   sufficient for stability of the second-moment bound recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityLimits<T: Scalar> {
    pub mu_eta_spectral: T,
    pub mu_eta_positivity: T,
    pub mu_contraction: T,
    pub mu_msp: T,
}

impl<T: Scalar> StabilityLimits<T> {
    /// The binding limit on `mu*eta`.
    pub fn mu_eta_limit(&self) -> T {
        self.mu_eta_spectral.min(self.mu_eta_positivity)
    }

    /// Validate `params` against the combination-matrix limits (both
    /// `mu*eta` bounds) and the contraction limit on `mu`, naming the first
    /// violated limit.
    pub fn check(&self, params: &AlgorithmParams<T>) -> Result<(), DiffusionError> {
        let mu_eta = params.mu_eta();
        if mu_eta > self.mu_eta_spectral {
            return Err(DiffusionError::MuEtaLimitViolated {
                limit: "combination-matrix spectral-radius limit",
                value: mu_eta.as_f64(),
                bound: self.mu_eta_spectral.as_f64(),
            });
        }
        if mu_eta > self.mu_eta_positivity {
            return Err(DiffusionError::MuEtaLimitViolated {
                limit: "combination-matrix positivity limit",
                value: mu_eta.as_f64(),
                bound: self.mu_eta_positivity.as_f64(),
            });
        }
        if params.mu >= self.mu_contraction {
            return Err(DiffusionError::MuLimitViolated {
                value: params.mu.as_f64(),
                bound: self.mu_contraction.as_f64(),
            });
        }
        Ok(())
    }
}

/// Compute all step-size limits for a network/cost pair. The noise-aware
/// `mu_msp` limit uses `noise` when given, else each cost's declared
/// envelope, else zero noise (in which case it coincides with
/// `mu_contraction`).
pub fn stability_limits<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    noise: Option<&NoiseProfile<T>>,
) -> StabilityLimits<T> {
    let two = real::<T>(2.0);
    let mu_eta_spectral = two / network.spectral().lambda_max();
    let mu_eta_positivity = T::one() / network.max_degree();

    let mut mu_contraction = T::max_value().unwrap();
    let mut mu_msp = T::max_value().unwrap();
    for (k, cost) in costs.iter().enumerate() {
        let (lo, hi) = cost.hessian_bounds();
        mu_contraction = mu_contraction.min(two / hi);
        let beta_sq = noise
            .map(|p| p.beta_sq(k))
            .or_else(|| cost.declared_noise().map(|e| e.beta_sq))
            .unwrap_or(T::zero());
        let three = real::<T>(3.0);
        let lim_lo = two * lo / (lo * lo + three * beta_sq);
        let lim_hi = two * hi / (hi * hi + three * beta_sq);
        mu_msp = mu_msp.min(lim_lo.min(lim_hi));
    }

    StabilityLimits {
        mu_eta_spectral,
        mu_eta_positivity,
        mu_contraction,
        mu_msp,
    }
}

/// Per-agent contraction factors
/// `gamma_k = max{|1 - mu lambda_{k,min}|, |1 - mu lambda_{k,max}|}`.
pub fn contraction_factors<T: Scalar>(costs: &[AgentCost<T>], mu: T) -> Vec<T> {
    costs
        .iter()
        .map(|c| {
            let (lo, hi) = c.hessian_bounds();
            (T::one() - mu * lo).abs().max((T::one() - mu * hi).abs())
        })
        .collect()
}

/// Network contraction factor `gamma = max_k gamma_k`.
pub fn contraction_factor<T: Scalar>(costs: &[AgentCost<T>], mu: T) -> T {
    contraction_factors(costs, mu)
        .into_iter()
        .fold(T::zero(), |a, g| a.max(g))
}

/// Doubly stochastic combination matrix `C = I - mu eta L`:
/// `c_kk = 1 - mu eta deg_k`, `c_kl = mu eta a_kl`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix<T: Scalar> {
    matrix: DMatrix<T>,
}

impl<T: Scalar> CombinationMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, k: usize, l: usize) -> T {
        self.matrix[(k, l)]
    }

    /// Apply blockwise to a stacked state: block `k` of the output is
    /// `sum_l c_kl psi_l`.
    pub fn apply(&self, state: &NetworkState<T>) -> NetworkState<T> {
        let n = self.n();
        assert_eq!(state.n_agents(), n, "state/combination size mismatch");
        let dim = state.agent_dim();
        let mut out = NetworkState::zeros(n, dim);
        for k in 0..n {
            let mut acc = DVector::zeros(dim);
            for l in 0..n {
                let c = self.matrix[(k, l)];
                if c != T::zero() {
                    acc.axpy(c, &state.block_owned(l), T::one());
                }
            }
            out.set_block(k, &acc);
        }
        out
    }
}

/// Build the combination matrix after validating both `mu*eta` limits.
pub fn combination_matrix<T: Scalar>(
    network: &Network<T>,
    params: &AlgorithmParams<T>,
) -> Result<CombinationMatrix<T>, DiffusionError> {
    let n = network.n_agents();
    let mu_eta = params.mu_eta();
    let two = real::<T>(2.0);
    let spectral_bound = two / network.spectral().lambda_max();
    if mu_eta > spectral_bound {
        return Err(DiffusionError::MuEtaLimitViolated {
            limit: "combination-matrix spectral-radius limit",
            value: mu_eta.as_f64(),
            bound: spectral_bound.as_f64(),
        });
    }
    let positivity_bound = T::one() / network.max_degree();
    if mu_eta > positivity_bound {
        return Err(DiffusionError::MuEtaLimitViolated {
            limit: "combination-matrix positivity limit",
            value: mu_eta.as_f64(),
            bound: positivity_bound.as_f64(),
        });
    }
    let mut matrix = network.adjacency() * mu_eta;
    for k in 0..n {
        matrix[(k, k)] = T::one() - mu_eta * network.degree(k);
    }
    Ok(CombinationMatrix { matrix })
}

/// Adapt phase with the stochastic-gradient oracle:
/// `psi_k = w_k - mu * sg_k(w_k)`. Draws are made in agent order, so a fixed
/// generator gives a reproducible step.
pub fn adapt_stochastic<T: Scalar, R: Rng + ?Sized>(
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    state: &NetworkState<T>,
    rng: &mut R,
) -> NetworkState<T> {
    let mut psi = state.clone();
    for (k, cost) in costs.iter().enumerate() {
        let w = state.block_owned(k);
        let g = cost.stochastic_gradient(&w, rng);
        psi.set_block(k, &(w - g * params.mu));
    }
    psi
}

/// Adapt phase with exact gradients.
pub fn adapt_exact<T: Scalar>(
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    state: &NetworkState<T>,
) -> NetworkState<T> {
    let mut psi = state.clone();
    for (k, cost) in costs.iter().enumerate() {
        let w = state.block_owned(k);
        let g = cost.gradient(&w);
        psi.set_block(k, &(w - g * params.mu));
    }
    psi
}

/// Combine phase in neighbor-sum form:
/// `w_k = psi_k - mu eta sum_{l in N_k} a_kl (psi_k - psi_l)`.
pub fn combine_neighbor_sum<T: Scalar>(
    network: &Network<T>,
    params: &AlgorithmParams<T>,
    psi: &NetworkState<T>,
) -> NetworkState<T> {
    let mu_eta = params.mu_eta();
    let mut out = psi.clone();
    for k in 0..network.n_agents() {
        let mut acc = psi.block_owned(k);
        for (l, weight) in network.neighbors(k) {
            let diff = psi.block(k) - psi.block(l);
            acc.axpy(-mu_eta * weight, &diff, T::one());
        }
        out.set_block(k, &acc);
    }
    out
}

/// One adapt-then-combine step with stochastic gradients (neighbor-sum
/// combine). With `eta = 0` this reduces to independent per-agent
/// stochastic gradient descent.
pub fn atc_step<T: Scalar, R: Rng + ?Sized>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    state: &NetworkState<T>,
    rng: &mut R,
) -> NetworkState<T> {
    let psi = adapt_stochastic(costs, params, state, rng);
    combine_neighbor_sum(network, params, &psi)
}

/// One noiseless step: exact gradients, then neighbor-sum combine.
pub fn deterministic_step<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    state: &NetworkState<T>,
) -> NetworkState<T> {
    let psi = adapt_exact(costs, params, state);
    combine_neighbor_sum(network, params, &psi)
}

/// Result of sampling the contraction property of the noiseless map.
#[derive(Debug, Clone)]
pub struct ContractionReport<T: Scalar> {
    /// Analytic contraction factor `gamma = max_k gamma_k`.
    pub gamma: T,
    /// Largest observed `||Y1 - Y2|| / ||X1 - X2||`.
    pub max_ratio: T,
    pub n_pairs: usize,
}

/// Verify `||Y1 - Y2|| <= gamma ||X1 - X2|| + 1e-10` on `n_pairs` random
/// state pairs. Fails with the offending pair index and ratio on violation.
pub fn contraction_check<T: Scalar, R: Rng + ?Sized>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    n_pairs: usize,
    rng: &mut R,
) -> Result<ContractionReport<T>, DiffusionError> {
    let dim = check_costs(network, costs)?;
    let gamma = contraction_factor(costs, params.mu);
    let slack = real::<T>(1e-10);
    let mut max_ratio = T::zero();
    for pair in 0..n_pairs {
        let x1 = NetworkState::standard_normal(network.n_agents(), dim, rng);
        let x2 = NetworkState::standard_normal(network.n_agents(), dim, rng);
        let y1 = deterministic_step(network, costs, params, &x1);
        let y2 = deterministic_step(network, costs, params, &x2);
        let dx = x1.minus(&x2).norm();
        let dy = y1.minus(&y2).norm();
        if dy > gamma * dx + slack {
            return Err(DiffusionError::ContractionViolated {
                pair,
                ratio: (dy / dx).as_f64(),
                gamma: gamma.as_f64(),
            });
        }
        if dx > T::zero() {
            max_ratio = max_ratio.max(dy / dx);
        }
    }
    Ok(ContractionReport {
        gamma,
        max_ratio,
        n_pairs,
    })
}
