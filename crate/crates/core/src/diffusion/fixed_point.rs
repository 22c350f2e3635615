//! Fixed point of the noiseless diffusion map.
//!
//! Under the combination-matrix and contraction step-size limits the
//! noiseless iteration is a Banach contraction with factor
//! `gamma = max_k gamma_k` and converges to a unique fixed point `W_inf`.
//! The iteration itself is the object under study, so the solver iterates
//! it plainly; for quadratic costs a direct linear solve of the stationarity
//! equation is provided as an independent cross-check.

use nalgebra::DMatrix;

use super::{
    check_costs, contraction_factor, deterministic_step, AlgorithmParams, DiffusionError,
};
use crate::costs::AgentCost;
use crate::graph::{Network, NetworkState};
use crate::linalg::{block_diag, laplacian_kron};
use crate::scalar::{real, Scalar};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Converged fixed point with the observed contraction behavior.
#[derive(Debug, Clone)]
pub struct FixedPoint<T: Scalar> {
    pub state: NetworkState<T>,
    pub iterations: usize,
    /// Norm of the final displacement.
    pub last_step: T,
    /// Last observed ratio `||step_i|| / ||step_{i-1}||`.
    pub last_ratio: T,
    /// Largest observed step ratio.
    pub max_ratio: T,
    /// Analytic contraction factor for reference.
    pub gamma: T,
}

/// Iterate the noiseless map from the zero state until the displacement
/// drops to `tol` (default `1e-12`) or `max_iter` is reached.
pub fn fixed_point<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<FixedPoint<T>, DiffusionError> {
    let dim = check_costs(network, costs)?;
    let gamma = contraction_factor(costs, params.mu);
    let mut state = NetworkState::zeros(network.n_agents(), dim);
    let mut prev_step = T::zero();
    let mut last_ratio = T::zero();
    let mut max_ratio = T::zero();
    for i in 1..=max_iter {
        let next = deterministic_step(network, costs, params, &state);
        let step = next.minus(&state).norm();
        if prev_step > T::zero() {
            last_ratio = step / prev_step;
            max_ratio = max_ratio.max(last_ratio);
        }
        state = next;
        if step <= tol {
            return Ok(FixedPoint {
                state,
                iterations: i,
                last_step: step,
                last_ratio,
                max_ratio,
                gamma,
            });
        }
        prev_step = step;
    }
    Err(DiffusionError::FixedPointNotConverged {
        max_iter,
        tol: tol.as_f64(),
        last_step: prev_step.as_f64(),
        last_ratio: last_ratio.as_f64(),
    })
}

/// Direct solve of the stationarity equation for quadratic costs:
/// `W = (I - mu eta L)(W - mu H (W - W_o))` rearranges to the linear system
/// `(I - B (I - mu H)) W = mu B H W_o` with `B = I - mu eta (L (x) I)`.
pub fn fixed_point_direct<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
) -> Result<NetworkState<T>, DiffusionError> {
    let dim = check_costs(network, costs)?;
    let n = network.n_agents();
    let total = n * dim;

    let mut hessians = Vec::with_capacity(n);
    let mut minimizers = Vec::with_capacity(n);
    for cost in costs {
        match cost {
            AgentCost::Quadratic(q) => {
                hessians.push(q.hessian_matrix().clone());
                minimizers.push(q.minimizer().clone());
            }
            AgentCost::Logistic(_) => return Err(DiffusionError::RequiresQuadraticCosts),
        }
    }
    let h = block_diag(&hessians);
    let b = DMatrix::identity(total, total) - laplacian_kron(network, dim) * params.mu_eta();
    let w_o = NetworkState::from_blocks(&minimizers);

    let system = DMatrix::identity(total, total) - &b * (DMatrix::identity(total, total) - &h * params.mu);
    let rhs = &b * (&h * w_o.as_vector()) * params.mu;
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or(DiffusionError::MuLimitViolated {
            value: params.mu.as_f64(),
            bound: real::<T>(2.0).as_f64() / hessians_max_eig(costs).as_f64(),
        })?;
    Ok(NetworkState::from_stacked(solution, n, dim))
}

fn hessians_max_eig<T: Scalar>(costs: &[AgentCost<T>]) -> T {
    costs
        .iter()
        .map(|c| c.hessian_bounds().1)
        .fold(T::zero(), |a, x| a.max(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::QuadraticCost;
    use crate::graph::Network;
    use nalgebra::{dmatrix, dvector};

    fn two_agent_setup() -> (Network<f64>, Vec<AgentCost<f64>>) {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let costs = vec![
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![1.0]).unwrap()),
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![-1.0]).unwrap()),
        ];
        (net, costs)
    }

    #[test]
    fn eta_zero_converges_to_individual_minimizers() {
        let (net, costs) = two_agent_setup();
        let params = AlgorithmParams::new(0.3, 0.0).unwrap();
        let fp = fixed_point(&net, &costs, &params, 1e-12, 100_000).unwrap();
        assert!((fp.state.block_owned(0)[0] - 1.0).abs() < 1e-11);
        assert!((fp.state.block_owned(1)[0] + 1.0).abs() < 1e-11);
        assert!(fp.gamma < 1.0);
    }

    #[test]
    fn consensus_tasks_have_zero_bias_fixed_point() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let w_o = dvector![0.7, -0.4];
        let costs: Vec<AgentCost<f64>> = (0..3)
            .map(|_| {
                AgentCost::Quadratic(
                    QuadraticCost::new(dmatrix![1.5, 0.2; 0.2, 1.0], w_o.clone()).unwrap(),
                )
            })
            .collect();
        let params = AlgorithmParams::new(0.2, 0.8).unwrap();
        let fp = fixed_point(&net, &costs, &params, 1e-13, 100_000).unwrap();
        for k in 0..3 {
            assert!((fp.state.block_owned(k) - &w_o).norm() < 1e-11);
        }
    }

    #[test]
    fn matches_frozen_two_by_two_solve() {
        // mu = 0.1, eta = 0.5 on the two-agent line with unit curvatures and
        // minimizers (1, -1). The stationarity equation in stacked form is
        // (I - B(I - mu I)) w = mu B w_o with B = I - mu eta L, solved here
        // explicitly as a frozen 2x2 system.
        let (net, costs) = two_agent_setup();
        let params = AlgorithmParams::new(0.1, 0.5).unwrap();

        let b = dmatrix![1.0 - 0.05, 0.05; 0.05, 1.0 - 0.05];
        let system = dmatrix![1.0, 0.0; 0.0, 1.0] - &b * 0.9;
        let rhs = &b * dvector![1.0, -1.0] * 0.1;
        let oracle = system.lu().solve(&rhs).unwrap();

        let fp = fixed_point(&net, &costs, &params, 1e-14, 1_000_000).unwrap();
        for k in 0..2 {
            assert!(
                (fp.state.block_owned(k)[0] - oracle[k]).abs() < 1e-10,
                "agent {k}: {} vs oracle {}",
                fp.state.block_owned(k)[0],
                oracle[k]
            );
        }

        let direct = fixed_point_direct(&net, &costs, &params).unwrap();
        for k in 0..2 {
            assert!((direct.block_owned(k)[0] - oracle[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_invariant_under_step() {
        let (net, costs) = two_agent_setup();
        let params = AlgorithmParams::new(0.1, 0.5).unwrap();
        let fp = fixed_point(&net, &costs, &params, 1e-14, 1_000_000).unwrap();
        let stepped = super::deterministic_step(&net, &costs, &params, &fp.state);
        assert!(stepped.minus(&fp.state).norm() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let (net, costs) = two_agent_setup();
        let params = AlgorithmParams::new(0.1, 0.5).unwrap();
        let err = fixed_point(&net, &costs, &params, 1e-14, 3).unwrap_err();
        assert!(matches!(
            err,
            DiffusionError::FixedPointNotConverged { max_iter: 3, .. }
        ));
    }
}
