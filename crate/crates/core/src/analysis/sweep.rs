//! Regularization-strength sweeps.

use rayon::prelude::*;

use super::{individual_minimizers, limiting_point, single_task_point, AnalysisError};
use crate::costs::AgentCost;
use crate::diffusion::{run, stability_limits, AlgorithmParams, Init, RunOptions};
use crate::graph::{Network, NetworkState};
use crate::scalar::{derive_seed, real, Scalar};

/// Monte Carlo part of a sweep: steady-state deviation from the
/// individual-minimizer vector, averaged over repetitions and a trailing
/// window.
#[derive(Debug, Clone, Copy)]
pub struct SweepRunSpec {
    pub n_iter: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Trailing fraction of iterations forming the steady-state window.
    pub window_fraction: f64,
    /// Minimum number of window samples.
    pub min_window: usize,
}

impl Default for SweepRunSpec {
    fn default() -> Self {
        Self {
            n_iter: 2_000,
            repetitions: 20,
            seed: 1,
            window_fraction: 0.1,
            min_window: 200,
        }
    }
}

/// One grid point of a regularization sweep.
#[derive(Debug, Clone)]
pub struct EtaSweepRow<T: Scalar> {
    pub eta: T,
    /// `||W_eta - W_o||`.
    pub dist_to_individual: T,
    /// `||W_eta - 1 (x) w_star||`.
    pub dist_to_single_task: T,
    /// Steady-state Monte Carlo deviation `mean ||W_o - W_i||^2 / N`, when
    /// the run part was requested and the grid point is stable.
    pub msd_vs_individual: Option<T>,
    /// Note attached when the Monte Carlo part was skipped.
    pub skipped: Option<String>,
}

/// Sweep the regularization strength over `eta_grid`. Analytic columns
/// (limiting point distances) are computed at every grid point; the Monte
/// Carlo deviation column runs only where `mu * eta` respects the
/// combination-matrix limits, and is skipped with a note otherwise.
pub fn eta_sweep<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params_base: &AlgorithmParams<T>,
    eta_grid: &[T],
    run_spec: Option<&SweepRunSpec>,
) -> Result<Vec<EtaSweepRow<T>>, AnalysisError> {
    if eta_grid.is_empty() {
        return Err(AnalysisError::EmptyGrid("eta_grid"));
    }
    let w_o = individual_minimizers(costs);
    let w_star = single_task_point(costs, real(1e-10))?;
    let consensus_star = NetworkState::consensus(network.n_agents(), &w_star);
    let limits = stability_limits(network, costs, None);

    let mut rows = Vec::with_capacity(eta_grid.len());
    for &eta in eta_grid {
        let lp = limiting_point(network, costs, eta, real(1e-10))?;
        let dist_to_individual = lp.state.minus(&w_o).norm();
        let dist_to_single_task = lp.state.minus(&consensus_star).norm();

        let (msd, skipped) = match run_spec {
            None => (None, None),
            Some(spec) => {
                let params = AlgorithmParams {
                    mu: params_base.mu,
                    eta,
                };
                if let Err(e) = limits.check(&params) {
                    (None, Some(format!("monte carlo skipped: {e}")))
                } else {
                    let msd = steady_state_msd(network, costs, &params, &w_o, spec)?;
                    (Some(msd), None)
                }
            }
        };

        rows.push(EtaSweepRow {
            eta,
            dist_to_individual,
            dist_to_single_task,
            msd_vs_individual: msd,
            skipped,
        });
    }
    Ok(rows)
}

fn steady_state_msd<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    w_o: &NetworkState<T>,
    spec: &SweepRunSpec,
) -> Result<T, AnalysisError> {
    let opts = RunOptions {
        record_cost: false,
        record_smoothness: false,
        thin: Some(1),
    };
    let window = (((spec.n_iter as f64) * spec.window_fraction).ceil() as usize)
        .max(spec.min_window.min(spec.n_iter))
        .min(spec.n_iter);
    let n = real::<T>(network.n_agents() as f64);

    // Collect per-repetition window means in fixed order, then reduce
    // sequentially for thread-count-independent results.
    let per_rep: Vec<Result<T, AnalysisError>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(spec.seed, rep as u64);
            let traj = run(
                network,
                costs,
                params,
                spec.n_iter,
                seed,
                &Init::GaussianStandard,
                &opts,
            )
            .map_err(AnalysisError::from)?;
            let start = traj.states.len() - window.min(traj.states.len());
            let mut acc = T::zero();
            let mut count = 0usize;
            for state in traj.states.iter().skip(start) {
                acc += state.minus(w_o).norm().powi(2) / n;
                count += 1;
            }
            Ok(acc / real(count as f64))
        })
        .collect();

    let mut total = T::zero();
    for r in per_rep {
        total += r?;
    }
    Ok(total / real(spec.repetitions as f64))
}
