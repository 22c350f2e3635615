//! Analytical objects of the stability theory and the Monte Carlo moment
//! estimation that verifies them.
//!
//! The regularized problem `min sum_k J_k(w_k) + eta/2 W^T (L (x) I) W` has a
//! unique minimizer `W_eta` (the network's limiting point). This module
//! computes it exactly for quadratic costs and by damped Newton otherwise,
//! together with:
//!
//! - the spectral block form of `W_eta` and its contraction-like matrix `K`
//!   ([`lemma1_blocks`]),
//! - the closed-form bias between `W_eta` and the noiseless algorithm's
//!   fixed point ([`bias_closed_form`]),
//! - element-wise moment bound recursions for the second, fourth, and
//!   squared-mean error perturbations ([`bound_recursions`]),
//! - empirical counterparts over seeded Monte Carlo repetitions
//!   ([`empirical_moments`]) and dominance checks between the two.

mod bias;
mod bounds;
mod lemma1;
mod moments;
mod sweep;

pub use bias::{bias_closed_form, bias_smoothness_relation, BiasSmoothnessRow};
pub use bounds::{
    bound_params, bound_recursions, kappa_d_prime, BoundFixedPoints, BoundParams, BoundTrajectory,
    KappaConfig, MomentInit,
};
pub use lemma1::{lemma1_blocks, lemma1_check, Lemma1Blocks, Lemma1Report};
pub use moments::{check_dominance, empirical_moments, DominanceReport, MomentKind, MomentTrajectory};
pub use sweep::{eta_sweep, EtaSweepRow, SweepRunSpec};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::costs::AgentCost;
use crate::diffusion::{check_costs, DiffusionError};
use crate::graph::{GraphError, Network, NetworkState};
use crate::linalg::{block_diag, laplacian_kron, stacked_gradient};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("tolerance must be positive, got {tol}")]
    NonPositiveTolerance { tol: f64 },

    #[error("Newton iteration stalled at residual {residual:e} (tolerance {tol:e})")]
    NewtonFailed { residual: f64, tol: f64 },

    #[error("block Q11 is not positive definite")]
    Q11NotPositiveDefinite,

    #[error("Schur complement is singular")]
    SchurSingular,

    #[error("linear system is singular (stability conditions violated)")]
    SingularSystem,

    #[error("operation requires quadratic costs at every agent")]
    RequiresQuadraticCosts,

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("need at least {need} Monte Carlo repetitions, got {got}")]
    TooFewRepetitions { need: usize, got: usize },

    #[error("Monte Carlo run with seed {seed} diverged at iteration {iteration}")]
    RunDiverged { seed: u64, iteration: usize },
}

/// How the limiting point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    /// Exact linear solve (quadratic costs).
    Direct,
    /// Damped Newton with the given iteration count.
    Newton(usize),
    /// Newton line search failed; plain gradient descent finished the job.
    GradientFallback(usize),
}

/// Minimizer of the regularized aggregate cost.
#[derive(Debug, Clone)]
pub struct LimitingPoint<T: Scalar> {
    /// The limiting point `W_eta`.
    pub state: NetworkState<T>,
    /// Norm of the stationarity residual `col{grad J_k} + eta (L (x) I) W`.
    pub residual: T,
    /// Spectral coordinates of the limiting point.
    pub spectral: NetworkState<T>,
    pub solver: SolverPath,
}

pub const DEFAULT_LIMITING_TOL: f64 = 1e-10;

/// 16-point Gauss-Legendre rule on `[-1, 1]` (positive abscissae half).
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_440_185,
    0.281_603_550_779_258_913_230,
    0.458_016_777_657_227_386_342,
    0.617_876_244_402_643_748_447,
    0.755_404_408_355_003_033_895,
    0.865_631_202_387_831_743_880,
    0.944_575_023_073_232_576_078,
    0.989_400_934_991_649_932_596,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_496_285,
    0.182_603_415_044_923_588_867,
    0.169_156_519_395_002_538_189,
    0.149_595_988_816_576_732_081,
    0.124_628_971_255_533_872_052,
    0.095_158_511_682_492_784_810,
    0.062_253_523_938_647_892_863,
    0.027_152_459_411_754_094_852,
];

/// Nodes and weights of the 16-point Gauss-Legendre rule mapped to `[0, 1]`.
pub(crate) fn gauss_legendre_16<T: Scalar>() -> Vec<(T, T)> {
    let mut rule = Vec::with_capacity(16);
    for i in 0..8 {
        let x = real::<T>(GL16_X[i]);
        let w = real::<T>(GL16_W[i]) / real(2.0);
        let half = real::<T>(0.5);
        rule.push((half * (T::one() - x), w));
        rule.push((half * (T::one() + x), w));
    }
    rule
}

/// Hessian averaged along the segment from `from` to `to`:
/// `int_0^1 H(from + t (to - from)) dt`. Exact for constant Hessians;
/// 16-point Gauss-Legendre quadrature otherwise (exact for polynomial
/// integrands up to degree 31).
pub fn averaged_hessian<T: Scalar>(
    cost: &AgentCost<T>,
    from: &DVector<T>,
    to: &DVector<T>,
) -> DMatrix<T> {
    match cost {
        AgentCost::Quadratic(q) => q.hessian_matrix().clone(),
        AgentCost::Logistic(_) => {
            let dir = to - from;
            let m = cost.dim();
            let mut acc = DMatrix::zeros(m, m);
            for (t, w) in gauss_legendre_16::<T>() {
                let point = from + &dir * t;
                acc += cost.hessian(&point) * w;
            }
            acc
        }
    }
}

/// Damped Newton for a strongly convex stacked problem. `grad` and `hess`
/// evaluate the gradient and Hessian; `fallback_step` is the gradient-descent
/// step used if the Newton line search stalls.
fn damped_newton<T: Scalar>(
    mut x: DVector<T>,
    grad: &dyn Fn(&DVector<T>) -> DVector<T>,
    hess: &dyn Fn(&DVector<T>) -> DMatrix<T>,
    tol: T,
    fallback_step: T,
) -> Result<(DVector<T>, SolverPath), AnalysisError> {
    const MAX_NEWTON: usize = 200;
    let mut g = grad(&x);
    for iter in 0..MAX_NEWTON {
        let g_norm = g.norm();
        if g_norm <= tol {
            return Ok((x, SolverPath::Newton(iter)));
        }
        let h = hess(&x);
        let dir = match h.lu().solve(&g) {
            Some(d) => d,
            None => break,
        };
        // Backtrack until the residual decreases.
        let mut t = T::one();
        let mut improved = false;
        while t > real(1e-12) {
            let cand = &x - &dir * t;
            let g_cand = grad(&cand);
            if g_cand.norm() < g_norm {
                x = cand;
                g = g_cand;
                improved = true;
                break;
            }
            t /= real(2.0);
        }
        if !improved {
            break;
        }
    }

    // Gradient-descent fallback with a step below the global curvature bound.
    const MAX_GD: usize = 5_000_000;
    for iter in 0..MAX_GD {
        let g_norm = g.norm();
        if g_norm <= tol {
            return Ok((x, SolverPath::GradientFallback(iter)));
        }
        x -= &g * fallback_step;
        g = grad(&x);
    }
    Err(AnalysisError::NewtonFailed {
        residual: g.norm().as_f64(),
        tol: tol.as_f64(),
    })
}

/// Minimizer of the regularized aggregate cost at strength `eta`.
///
/// Quadratic costs use the exact solve
/// `W_eta = (H + eta L)^{-1} H W_o`; general costs run damped Newton on the
/// stacked problem with gradient `col{grad J_k} + eta (L (x) I) W` until the
/// residual norm drops below `tol`.
pub fn limiting_point<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    eta: T,
    tol: T,
) -> Result<LimitingPoint<T>, AnalysisError> {
    if tol <= T::zero() {
        return Err(AnalysisError::NonPositiveTolerance { tol: tol.as_f64() });
    }
    let dim = check_costs(network, costs)?;
    let n = network.n_agents();
    let lap = laplacian_kron(network, dim);

    let all_quadratic = costs
        .iter()
        .all(|c| matches!(c, AgentCost::Quadratic(_)));

    let (state, solver) = if all_quadratic {
        let mut hessians = Vec::with_capacity(n);
        let mut minimizers = Vec::with_capacity(n);
        for cost in costs {
            if let AgentCost::Quadratic(q) = cost {
                hessians.push(q.hessian_matrix().clone());
                minimizers.push(q.minimizer().clone());
            }
        }
        let h = block_diag(&hessians);
        let w_o = NetworkState::from_blocks(&minimizers);
        let system = &h + &lap * eta;
        let rhs = &h * w_o.as_vector();
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or(AnalysisError::SingularSystem)?;
        (
            NetworkState::from_stacked(solution, n, dim),
            SolverPath::Direct,
        )
    } else {
        let grad = |w: &DVector<T>| -> DVector<T> {
            let state = NetworkState::from_stacked(w.clone(), n, dim);
            stacked_gradient(costs, &state) + &lap * w * eta
        };
        let hess = |w: &DVector<T>| -> DMatrix<T> {
            let state = NetworkState::from_stacked(w.clone(), n, dim);
            let blocks: Vec<DMatrix<T>> = costs
                .iter()
                .enumerate()
                .map(|(k, c)| c.hessian(&state.block_owned(k)))
                .collect();
            block_diag(&blocks) + &lap * eta
        };
        let lambda_max: T = costs
            .iter()
            .map(|c| c.hessian_bounds().1)
            .fold(T::zero(), |a, x| a.max(x));
        let fallback = T::one() / (lambda_max + eta * network.spectral().lambda_max());
        let (solution, path) = damped_newton(
            DVector::zeros(n * dim),
            &grad,
            &hess,
            tol,
            fallback,
        )?;
        (NetworkState::from_stacked(solution, n, dim), path)
    };

    let residual = (stacked_gradient(costs, &state) + &lap * state.as_vector() * eta).norm();
    let spectral = network.spectral().gft(&state)?;
    Ok(LimitingPoint {
        state,
        residual,
        spectral,
        solver,
    })
}

/// Minimizer of the plain aggregate `sum_k J_k(w)` over a single shared
/// parameter vector: the single-task solution the network approaches as
/// `eta` grows.
pub fn single_task_point<T: Scalar>(
    costs: &[AgentCost<T>],
    tol: T,
) -> Result<DVector<T>, AnalysisError> {
    if tol <= T::zero() {
        return Err(AnalysisError::NonPositiveTolerance { tol: tol.as_f64() });
    }
    let dim = costs[0].dim();
    let all_quadratic = costs
        .iter()
        .all(|c| matches!(c, AgentCost::Quadratic(_)));
    if all_quadratic {
        let mut h_sum = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for cost in costs {
            if let AgentCost::Quadratic(q) = cost {
                h_sum += q.hessian_matrix();
                rhs += q.hessian_matrix() * q.minimizer();
            }
        }
        return h_sum.lu().solve(&rhs).ok_or(AnalysisError::SingularSystem);
    }

    let grad = |w: &DVector<T>| -> DVector<T> {
        let mut g = DVector::zeros(dim);
        for cost in costs {
            g += cost.gradient(w);
        }
        g
    };
    let hess = |w: &DVector<T>| -> DMatrix<T> {
        let mut h = DMatrix::zeros(dim, dim);
        for cost in costs {
            h += cost.hessian(w);
        }
        h
    };
    let lambda_max_sum: T = costs
        .iter()
        .map(|c| c.hessian_bounds().1)
        .fold(T::zero(), |a, x| a + x);
    let (solution, _) = damped_newton(
        DVector::zeros(dim),
        &grad,
        &hess,
        tol,
        T::one() / lambda_max_sum,
    )?;
    Ok(solution)
}

/// Stacked vector of every agent's individual minimizer.
pub fn individual_minimizers<T: Scalar>(costs: &[AgentCost<T>]) -> NetworkState<T> {
    let blocks: Vec<DVector<T>> = costs.iter().map(|c| c.minimizer()).collect();
    NetworkState::from_blocks(&blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{FeatureDistribution, LogisticCost, QuadraticCost};
    use crate::diffusion::run::global_cost;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn gauss_legendre_rule_is_exact_on_polynomials() {
        // int_0^1 t^k dt = 1/(k+1), exact through degree 31.
        let rule = gauss_legendre_16::<f64>();
        let weight_sum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(weight_sum, 1.0, epsilon = 1e-14);
        for k in [0usize, 1, 2, 5, 10, 20, 31] {
            let quad: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
            assert_abs_diff_eq!(quad, 1.0 / (k as f64 + 1.0), epsilon = 1e-13);
        }
    }

    fn two_agent_line() -> (Network<f64>, Vec<AgentCost<f64>>) {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let costs = vec![
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![1.0]).unwrap()),
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![-1.0]).unwrap()),
        ];
        (net, costs)
    }

    #[test]
    fn eta_zero_gives_individual_minimizers() {
        let (net, costs) = two_agent_line();
        let lp = limiting_point(&net, &costs, 0.0, 1e-10).unwrap();
        let w_o = individual_minimizers(&costs);
        assert!(lp.state.minus(&w_o).norm() < 1e-12);
        assert!(lp.residual <= 1e-10);
    }

    #[test]
    fn consensus_tasks_stay_at_consensus_for_any_eta() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let w = dvector![0.4, -0.2];
        let costs: Vec<AgentCost<f64>> = (0..3)
            .map(|_| AgentCost::Quadratic(QuadraticCost::isotropic(2, 2.0, w.clone()).unwrap()))
            .collect();
        for eta in [0.0, 0.5, 5.0, 100.0] {
            let lp = limiting_point(&net, &costs, eta, 1e-12).unwrap();
            for k in 0..3 {
                assert!((lp.state.block_owned(k) - &w).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn two_agent_shrinkage_closed_form() {
        // Unit Hessians, tasks (1, -1): the limiting point is
        // (I + eta L)^{-1} W_o = (1, -1) / (1 + 2 eta).
        let (net, costs) = two_agent_line();
        let eta = 0.5;
        let lp = limiting_point(&net, &costs, eta, 1e-12).unwrap();
        assert_abs_diff_eq!(lp.state.block_owned(0)[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.state.block_owned(1)[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_task_point_examples() {
        let (.., costs) = two_agent_line();
        let w_star = single_task_point(&costs, 1e-12).unwrap();
        assert_abs_diff_eq!(w_star[0], 0.0, epsilon = 1e-12);

        let same: Vec<AgentCost<f64>> = (0..4)
            .map(|_| {
                AgentCost::Quadratic(QuadraticCost::isotropic(2, 1.5, dvector![2.0, 1.0]).unwrap())
            })
            .collect();
        let w_star = single_task_point(&same, 1e-12).unwrap();
        assert!((w_star - dvector![2.0, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn large_eta_approaches_single_task_solution() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let costs: Vec<AgentCost<f64>> = vec![
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![1.0]).unwrap()),
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 2.0, dvector![0.0]).unwrap()),
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![-0.5]).unwrap()),
        ];
        let w_star = single_task_point(&costs, 1e-12).unwrap();
        let lp = limiting_point(&net, &costs, 1e3, 1e-12).unwrap();
        let consensus_star = NetworkState::consensus(3, &w_star);
        assert!(
            lp.state.minus(&consensus_star).norm() < 1e-2,
            "distance {}",
            lp.state.minus(&consensus_star).norm()
        );
    }

    #[test]
    fn newton_path_reaches_tolerance_on_logistic_network() {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let costs: Vec<AgentCost<f64>> = (0..2)
            .map(|k| {
                AgentCost::Logistic(
                    LogisticCost::new(
                        FeatureDistribution::standard(2),
                        dvector![1.0, (k as f64) - 0.5],
                        0.05,
                        2_000,
                        k as u64,
                    )
                    .unwrap(),
                )
            })
            .collect();
        let lp = limiting_point(&net, &costs, 0.8, 1e-10).unwrap();
        assert!(lp.residual <= 1e-10);
        assert!(matches!(
            lp.solver,
            SolverPath::Newton(_) | SolverPath::GradientFallback(_)
        ));
    }

    #[test]
    fn regularized_gradient_matches_finite_differences_of_global_cost() {
        let (net, costs) = two_agent_line();
        let eta = 0.7;
        let lp = limiting_point(&net, &costs, eta, 1e-12).unwrap();
        let lap = laplacian_kron(&net, 1);
        // Probe around the limiting point.
        for shift in [-0.05, 0.03] {
            let mut w = lp.state.as_vector().clone();
            w[0] += shift;
            let state = NetworkState::from_stacked(w.clone(), 2, 1);
            let grad = stacked_gradient(&costs, &state) + &lap * &w * eta;
            let h = 1e-6;
            for i in 0..2 {
                let mut wp = state.clone();
                let mut wm = state.clone();
                wp.block_mut(i)[0] += h;
                wm.block_mut(i)[0] -= h;
                let fd = (global_cost(&net, &costs, eta, &wp)
                    - global_cost(&net, &costs, eta, &wm))
                    / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0),
                    "coordinate {i}: fd {fd} vs grad {}",
                    grad[i]
                );
            }
        }
    }
}
