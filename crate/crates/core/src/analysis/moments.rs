//! Monte Carlo estimation of the error moments relative to the fixed point.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::AnalysisError;
use crate::costs::AgentCost;
use crate::diffusion::{atc_step, check_costs, AlgorithmParams, Init};
use crate::graph::{Network, NetworkState};
use crate::scalar::{derive_seed, real, Scalar};

/// Which moment a dominance check inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// Mean of `||w_inf_k - w_k_i||^2`.
    Msp,
    /// Mean of `||w_inf_k - w_k_i||^4`.
    Mfp,
    /// `||mean(w_inf_k - w_k_i)||^2`.
    Smp,
}

/// Per-agent, per-iteration sample moments over `r_runs` independent seeded
/// runs, with standard errors.
///
/// The squared-mean estimator `||mean e||^2` is biased upward by
/// `tr(Cov e)/R`; its reported standard error folds that bias in together
/// with the first-order fluctuation of the squared norm, all computed from
/// scalar accumulators.
#[derive(Debug, Clone)]
pub struct MomentTrajectory<T: Scalar> {
    /// Iteration indices of the recorded rows (0 is the initial state).
    pub iterations: Vec<usize>,
    pub msp: Vec<DVector<T>>,
    pub msp_se: Vec<DVector<T>>,
    pub mfp: Vec<DVector<T>>,
    pub mfp_se: Vec<DVector<T>>,
    pub smp: Vec<DVector<T>>,
    pub smp_se: Vec<DVector<T>>,
    pub r_runs: usize,
}

impl<T: Scalar> MomentTrajectory<T> {
    pub fn moment(&self, kind: MomentKind) -> (&[DVector<T>], &[DVector<T>]) {
        match kind {
            MomentKind::Msp => (&self.msp, &self.msp_se),
            MomentKind::Mfp => (&self.mfp, &self.mfp_se),
            MomentKind::Smp => (&self.smp, &self.smp_se),
        }
    }

    /// Mean of the recorded moment over the steady-state window: the last
    /// `window_fraction` of iterations, at least `min_window` rows (clamped
    /// to what was recorded), averaged over agents as well.
    pub fn steady_state_mean(&self, kind: MomentKind, window_fraction: f64, min_window: usize) -> T {
        let (values, _) = self.moment(kind);
        let rows = values.len();
        let by_fraction = ((rows as f64) * window_fraction).ceil() as usize;
        let take = by_fraction.max(min_window).min(rows);
        let mut acc = T::zero();
        let mut count = 0usize;
        for row in values.iter().skip(rows - take) {
            acc += row.mean();
            count += 1;
        }
        acc / real(count as f64)
    }
}

/// One run's accumulated contribution at each recorded iteration.
struct RunMoments {
    /// Per recorded row, per agent: `||e||^2`, `||e||^4`, `||e||^8`,
    /// then the raw error vector entries.
    s2: Vec<Vec<f64>>,
    s4: Vec<Vec<f64>>,
    s8: Vec<Vec<f64>>,
    sv: Vec<Vec<f64>>,
}

/// Estimate the error moments relative to `w_inf` over `r_runs` independent
/// runs (deterministically seeded from `seed`; at least 30 required).
/// Iterations are recorded at stride `record_stride` (1 records all).
/// Divergence of any run aborts with the offending seed.
#[allow(clippy::too_many_arguments)]
pub fn empirical_moments<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    n_iter: usize,
    r_runs: usize,
    seed: u64,
    init: &Init<T>,
    w_inf: &NetworkState<T>,
    record_stride: usize,
) -> Result<MomentTrajectory<T>, AnalysisError> {
    let dim = check_costs(network, costs)?;
    if r_runs < 30 {
        return Err(AnalysisError::TooFewRepetitions {
            need: 30,
            got: r_runs,
        });
    }
    let n = network.n_agents();
    let stride = record_stride.max(1);
    let recorded: Vec<usize> = {
        let mut v: Vec<usize> = (0..=n_iter).filter(|i| i % stride == 0).collect();
        if *v.last().unwrap() != n_iter {
            v.push(n_iter);
        }
        v
    };
    let rows = recorded.len();

    let run_one = |run_idx: usize| -> Result<RunMoments, AnalysisError> {
        let run_seed = derive_seed(seed, run_idx as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let mut state = match init {
            Init::Zero => NetworkState::zeros(n, dim),
            Init::GaussianStandard => NetworkState::standard_normal(n, dim, &mut rng),
            Init::State(s) => s.clone(),
        };
        let mut out = RunMoments {
            s2: vec![vec![0.0; n]; rows],
            s4: vec![vec![0.0; n]; rows],
            s8: vec![vec![0.0; n]; rows],
            sv: vec![vec![0.0; n * dim]; rows],
        };
        let mut row = 0usize;
        let mut record = |state: &NetworkState<T>, row: usize, out: &mut RunMoments| {
            for k in 0..n {
                let e = w_inf.block(k) - state.block(k);
                let d2 = e.norm_squared().as_f64();
                out.s2[row][k] = d2;
                out.s4[row][k] = d2 * d2;
                out.s8[row][k] = d2 * d2 * d2 * d2;
                for j in 0..dim {
                    out.sv[row][k * dim + j] = e[j].as_f64();
                }
            }
        };
        if recorded[row] == 0 {
            record(&state, row, &mut out);
            row += 1;
        }
        for i in 1..=n_iter {
            state = atc_step(network, costs, params, &state, &mut rng);
            if state.has_non_finite() {
                return Err(AnalysisError::RunDiverged {
                    seed: run_seed,
                    iteration: i,
                });
            }
            if row < rows && recorded[row] == i {
                record(&state, row, &mut out);
                row += 1;
            }
        }
        Ok(out)
    };

    // Accumulate in fixed run order (chunked parallel map, sequential fold)
    // so results are bit-identical regardless of thread count.
    let mut acc2 = vec![vec![0.0f64; n]; rows];
    let mut acc4 = vec![vec![0.0f64; n]; rows];
    let mut acc8 = vec![vec![0.0f64; n]; rows];
    let mut accv = vec![vec![0.0f64; n * dim]; rows];
    const CHUNK: usize = 16;
    let mut start = 0usize;
    while start < r_runs {
        let end = (start + CHUNK).min(r_runs);
        let chunk: Vec<Result<RunMoments, AnalysisError>> =
            (start..end).into_par_iter().map(run_one).collect();
        for result in chunk {
            let rm = result?;
            for row in 0..rows {
                for k in 0..n {
                    acc2[row][k] += rm.s2[row][k];
                    acc4[row][k] += rm.s4[row][k];
                    acc8[row][k] += rm.s8[row][k];
                }
                for j in 0..n * dim {
                    accv[row][j] += rm.sv[row][j];
                }
            }
        }
        start = end;
    }

    let r = r_runs as f64;
    let mut msp = Vec::with_capacity(rows);
    let mut msp_se = Vec::with_capacity(rows);
    let mut mfp = Vec::with_capacity(rows);
    let mut mfp_se = Vec::with_capacity(rows);
    let mut smp = Vec::with_capacity(rows);
    let mut smp_se = Vec::with_capacity(rows);
    for row in 0..rows {
        let mut msp_row = DVector::zeros(n);
        let mut msp_se_row = DVector::zeros(n);
        let mut mfp_row = DVector::zeros(n);
        let mut mfp_se_row = DVector::zeros(n);
        let mut smp_row = DVector::zeros(n);
        let mut smp_se_row = DVector::zeros(n);
        for k in 0..n {
            let m2 = acc2[row][k] / r;
            let m4 = acc4[row][k] / r;
            let m8 = acc8[row][k] / r;
            msp_row[k] = real(m2);
            msp_se_row[k] = real(((m4 - m2 * m2).max(0.0) / r).sqrt());
            mfp_row[k] = real(m4);
            mfp_se_row[k] = real(((m8 - m4 * m4).max(0.0) / r).sqrt());

            let mean_sq: f64 = (0..dim)
                .map(|j| {
                    let m = accv[row][k * dim + j] / r;
                    m * m
                })
                .sum();
            smp_row[k] = real(mean_sq);
            // tr(Cov)/R bias plus the first-order fluctuation of ||mean||^2.
            let tr_cov = (m2 - mean_sq).max(0.0);
            let se = (4.0 * mean_sq * tr_cov / r + 2.0 * tr_cov * tr_cov / (r * r)).sqrt()
                + tr_cov / r;
            smp_se_row[k] = real(se);
        }
        msp.push(msp_row);
        msp_se.push(msp_se_row);
        mfp.push(mfp_row);
        mfp_se.push(mfp_se_row);
        smp.push(smp_row);
        smp_se.push(smp_se_row);
    }

    Ok(MomentTrajectory {
        iterations: recorded,
        msp,
        msp_se,
        mfp,
        mfp_se,
        smp,
        smp_se,
        r_runs,
    })
}

/// Result of an element-wise dominance check `empirical <= bound + 3 SE`.
#[derive(Debug, Clone)]
pub struct DominanceReport<T: Scalar> {
    pub kind: MomentKind,
    pub ok: bool,
    /// Worst value of `empirical - (bound + 3 SE)` over all checked entries
    /// (negative when the check passes everywhere).
    pub max_excess: T,
    pub violations: usize,
    /// First violating `(iteration, agent)`, if any.
    pub first_violation: Option<(usize, usize)>,
}

/// Compare an empirical moment trajectory against the bound vectors
/// (indexed by iteration), element-wise at every recorded iteration.
pub fn check_dominance<T: Scalar>(
    bound_by_iteration: &[DVector<T>],
    empirical: &MomentTrajectory<T>,
    kind: MomentKind,
) -> DominanceReport<T> {
    let (values, ses) = empirical.moment(kind);
    let three = real::<T>(3.0);
    let tiny = real::<T>(1e-12);
    let mut max_excess = T::min_value().unwrap();
    let mut violations = 0usize;
    let mut first = None;
    for (row, &iter) in empirical.iterations.iter().enumerate() {
        let bound = &bound_by_iteration[iter];
        for k in 0..bound.len() {
            let allowed = bound[k] + three * ses[row][k] + tiny;
            let excess = values[row][k] - allowed;
            max_excess = max_excess.max(excess);
            if excess > T::zero() {
                violations += 1;
                if first.is_none() {
                    first = Some((iter, k));
                }
            }
        }
    }
    DominanceReport {
        kind,
        ok: violations == 0,
        max_excess,
        violations,
        first_violation: first,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{bound_recursions, limiting_point, KappaConfig, MomentInit};
    use crate::costs::{NoiseProfile, QuadraticCost};
    use crate::diffusion::{deterministic_step, fixed_point};
    use nalgebra::dvector;

    fn noisy_pair() -> (Network<f64>, Vec<AgentCost<f64>>) {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let costs = vec![
            AgentCost::Quadratic(
                QuadraticCost::isotropic(1, 1.0, dvector![1.0])
                    .unwrap()
                    .with_noise(0.0, 0.3)
                    .unwrap(),
            ),
            AgentCost::Quadratic(
                QuadraticCost::isotropic(1, 1.2, dvector![-1.0])
                    .unwrap()
                    .with_noise(0.0, 0.2)
                    .unwrap(),
            ),
        ];
        (net, costs)
    }

    #[test]
    fn zero_noise_moments_equal_deterministic_errors() {
        let net = Network::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let costs = vec![
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![1.0]).unwrap()),
            AgentCost::Quadratic(QuadraticCost::isotropic(1, 1.0, dvector![-1.0]).unwrap()),
        ];
        let params = AlgorithmParams::new(0.1, 0.5).unwrap();
        let w_inf = fixed_point(&net, &costs, &params, 1e-13, 100_000)
            .unwrap()
            .state;
        let traj = empirical_moments(
            &net,
            &costs,
            &params,
            20,
            40,
            9,
            &Init::Zero,
            &w_inf,
            1,
        )
        .unwrap();

        // Reference: the deterministic iteration.
        let mut state = NetworkState::zeros(2, 1);
        for (row, &iter) in traj.iterations.iter().enumerate() {
            if row > 0 {
                let _ = iter;
                state = deterministic_step(&net, &costs, &params, &state);
            }
            for k in 0..2 {
                let d2 = (w_inf.block(k) - state.block(k)).norm_squared();
                assert!(
                    (traj.msp[row][k] - d2).abs() < 1e-12,
                    "row {row} agent {k}"
                );
                assert!(traj.msp_se[row][k] < 1e-12);
                assert!((traj.smp[row][k] - d2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn requires_thirty_runs() {
        let (net, costs) = noisy_pair();
        let params = AlgorithmParams::new(0.1, 0.2).unwrap();
        let w_inf = fixed_point(&net, &costs, &params, 1e-12, 100_000)
            .unwrap()
            .state;
        assert!(matches!(
            empirical_moments(&net, &costs, &params, 5, 10, 0, &Init::Zero, &w_inf, 1),
            Err(AnalysisError::TooFewRepetitions { .. })
        ));
    }

    #[test]
    fn empirical_moments_stay_below_bounds() {
        let (net, costs) = noisy_pair();
        let params = AlgorithmParams::new(0.05, 0.5).unwrap();
        let noise = NoiseProfile::declared(&costs).unwrap();
        let w_eta = limiting_point(&net, &costs, params.eta, 1e-12).unwrap().state;
        let w_inf = fixed_point(&net, &costs, &params, 1e-13, 1_000_000)
            .unwrap()
            .state;
        let n_iter = 400;
        let bounds = bound_recursions(
            &net,
            &costs,
            &noise,
            &params,
            &w_eta,
            &w_inf,
            n_iter,
            &MomentInit::deterministic(&w_inf, &NetworkState::zeros(2, 1)),
            &KappaConfig::default(),
        )
        .unwrap();
        let empirical = empirical_moments(
            &net,
            &costs,
            &params,
            n_iter,
            400,
            123,
            &Init::Zero,
            &w_inf,
            1,
        )
        .unwrap();
        for kind in [MomentKind::Msp, MomentKind::Mfp, MomentKind::Smp] {
            let bound = match kind {
                MomentKind::Msp => &bounds.msp,
                MomentKind::Mfp => &bounds.mfp,
                MomentKind::Smp => &bounds.smp,
            };
            let report = check_dominance(bound, &empirical, kind);
            assert!(
                report.ok,
                "{kind:?} violated {} times, first at {:?}, excess {}",
                report.violations, report.first_violation, report.max_excess
            );
        }
    }

    #[test]
    fn results_are_deterministic_across_repeat_calls() {
        let (net, costs) = noisy_pair();
        let params = AlgorithmParams::new(0.1, 0.3).unwrap();
        let w_inf = fixed_point(&net, &costs, &params, 1e-12, 100_000)
            .unwrap()
            .state;
        let a = empirical_moments(&net, &costs, &params, 50, 32, 7, &Init::Zero, &w_inf, 5)
            .unwrap();
        let b = empirical_moments(&net, &costs, &params, 50, 32, 7, &Init::Zero, &w_inf, 5)
            .unwrap();
        assert_eq!(a.msp, b.msp);
        assert_eq!(a.smp, b.smp);
        assert_eq!(a.iterations, b.iterations);
    }
}
