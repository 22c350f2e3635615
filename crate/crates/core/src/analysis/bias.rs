//! Closed-form fixed-point bias and its relation to task smoothness.

use nalgebra::{DMatrix, DVector};

use super::{limiting_point, AnalysisError};
use crate::costs::{AgentCost, QuadraticCost};
use crate::diffusion::{check_costs, AlgorithmParams};
use crate::graph::{Network, NetworkState};
use crate::linalg::{block_diag, laplacian_kron};
use crate::scalar::{real, Scalar};

/// Closed-form gap `W_eta - W_inf` between the limiting point and the
/// noiseless algorithm's fixed point, for quadratic costs:
///
/// ```text
/// W_eta - W_inf = mu^2 eta^2 [I - (I - mu eta L)(I - mu H)]^{-1} L^2 W_eta
/// ```
///
/// (stacked operators; `H = diag{H_k}` is constant for quadratic costs).
/// The inverse exists under the combination-matrix and contraction limits;
/// a singular system is reported as a stability violation. The bias is
/// `O(mu)` and vanishes at `eta = 0` and for consensus tasks.
pub fn bias_closed_form<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
) -> Result<NetworkState<T>, AnalysisError> {
    let dim = check_costs(network, costs)?;
    let n = network.n_agents();
    let total = n * dim;

    let mut hessians = Vec::with_capacity(n);
    for cost in costs {
        match cost {
            AgentCost::Quadratic(q) => hessians.push(q.hessian_matrix().clone()),
            AgentCost::Logistic(_) => return Err(AnalysisError::RequiresQuadraticCosts),
        }
    }
    let h = block_diag(&hessians);
    let lap = laplacian_kron(network, dim);
    let identity = DMatrix::<T>::identity(total, total);

    let w_eta = limiting_point(network, costs, params.eta, real(1e-12))?.state;

    let combine = &identity - &lap * params.mu_eta();
    let system = &identity - combine * (&identity - &h * params.mu);
    let mu_eta_sq = params.mu_eta() * params.mu_eta();
    let rhs = &lap * (&lap * w_eta.as_vector()) * mu_eta_sq;
    let bias = system
        .lu()
        .solve(&rhs)
        .ok_or(AnalysisError::SingularSystem)?;
    Ok(NetworkState::from_stacked(bias, n, dim))
}

/// One row of the smoothness/bias table.
#[derive(Debug, Clone, Copy)]
pub struct BiasSmoothnessRow<T: Scalar> {
    /// Scale applied to the non-DC spectral content of the task vector.
    pub scale: T,
    /// Smoothness `S(W_o(scale))`.
    pub smoothness: T,
    /// `||W_eta(scale) - W_o(scale)||`.
    pub bias_norm: T,
}

/// Fix the DC spectral block of the individual-minimizer vector and scale
/// the rest by each factor in `scale_grid`; report the task smoothness and
/// the regularization bias at strength `eta` for each scale. Both columns
/// are nondecreasing in the scale, and for uniform constant Hessians the
/// bias is exactly linear in it.
pub fn bias_smoothness_relation<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    eta: T,
    scale_grid: &[T],
) -> Result<Vec<BiasSmoothnessRow<T>>, AnalysisError> {
    let dim = check_costs(network, costs)?;
    if scale_grid.is_empty() {
        return Err(AnalysisError::EmptyGrid("scale_grid"));
    }
    let mut hessians = Vec::new();
    for cost in costs {
        match cost {
            AgentCost::Quadratic(q) => hessians.push(q.hessian_matrix().clone()),
            AgentCost::Logistic(_) => return Err(AnalysisError::RequiresQuadraticCosts),
        }
    }

    let basis = network.spectral();
    let w_o = super::individual_minimizers(costs);
    let w_bar_o = basis.gft(&w_o)?;

    let mut rows = Vec::with_capacity(scale_grid.len());
    for &scale in scale_grid {
        let mut scaled = w_bar_o.clone();
        for m in 1..network.n_agents() {
            let block = scaled.block_owned(m) * scale;
            scaled.set_block(m, &block);
        }
        let tasks = basis.igft(&scaled)?;
        let scaled_costs: Vec<AgentCost<T>> = hessians
            .iter()
            .enumerate()
            .map(|(k, h)| {
                AgentCost::Quadratic(
                    QuadraticCost::new(h.clone(), tasks.block_owned(k))
                        .expect("hessian already validated"),
                )
            })
            .collect();
        let lp = limiting_point(network, &scaled_costs, eta, real(1e-12))?;
        rows.push(BiasSmoothnessRow {
            scale,
            smoothness: network.smoothness(&tasks)?,
            bias_norm: lp.state.minus(&tasks).norm(),
        });
    }
    let _ = dim;
    Ok(rows)
}
