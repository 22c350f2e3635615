//! Seeded trajectory runner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{atc_step, check_costs, AlgorithmParams, DiffusionError};
use crate::costs::AgentCost;
use crate::graph::{Network, NetworkState};
use crate::scalar::{real, Scalar};

/// Iteration count above which stored states are thinned.
pub const THINNING_THRESHOLD: usize = 10_000;

/// Initial state of a run.
#[derive(Debug, Clone)]
pub enum Init<T: Scalar> {
    /// Zero state (default for deterministic studies).
    Zero,
    /// Each agent drawn from the standard normal (default for stochastic
    /// runs).
    GaussianStandard,
    /// Explicit starting state.
    State(NetworkState<T>),
}

/// What to record along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Record the regularized global cost at every iteration. Costly for
    /// logistic agents (each evaluation averages the frozen oracle sample).
    pub record_cost: bool,
    /// Record the smoothness of the state at every iteration.
    pub record_smoothness: bool,
    /// Store every `thin`-th state; `None` selects 1 below
    /// [`THINNING_THRESHOLD`] iterations and `ceil(n_iter / threshold)`
    /// above it.
    pub thin: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_cost: true,
            record_smoothness: true,
            thin: None,
        }
    }
}

/// Recorded trajectory of one seeded run.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub seed: u64,
    pub n_iter: usize,
    /// Stride between stored states.
    pub stride: usize,
    /// Iteration indices of the stored states (0 is the initial state; the
    /// final iteration is always stored).
    pub iterations: Vec<usize>,
    pub states: Vec<NetworkState<T>>,
    /// Regularized global cost per stored iteration, when recorded.
    pub cost: Option<Vec<T>>,
    /// Smoothness per stored iteration, when recorded.
    pub smoothness: Option<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_state(&self) -> &NetworkState<T> {
        self.states.last().expect("trajectory stores the final state")
    }
}

/// Regularized global cost `sum_k J_k(w_k) + eta/2 * S(W)`.
pub fn global_cost<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    eta: T,
    state: &NetworkState<T>,
) -> T {
    let mut total = T::zero();
    for (k, cost) in costs.iter().enumerate() {
        total += cost.value(&state.block_owned(k));
    }
    total + eta / real(2.0) * network.smoothness(state).expect("matching dimensions")
}

/// Run the stochastic recursion for `n_iter` iterations. Deterministic given
/// `seed`; aborts with the iteration index if the state leaves the finite
/// range.
pub fn run<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    params: &AlgorithmParams<T>,
    n_iter: usize,
    seed: u64,
    init: &Init<T>,
    options: &RunOptions,
) -> Result<Trajectory<T>, DiffusionError> {
    let dim = check_costs(network, costs)?;
    let n = network.n_agents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let state0 = match init {
        Init::Zero => NetworkState::zeros(n, dim),
        Init::GaussianStandard => NetworkState::standard_normal(n, dim, &mut rng),
        Init::State(s) => {
            assert_eq!(s.n_agents(), n, "init state has wrong agent count");
            assert_eq!(s.agent_dim(), dim, "init state has wrong agent dimension");
            s.clone()
        }
    };

    let stride = options.thin.unwrap_or(if n_iter <= THINNING_THRESHOLD {
        1
    } else {
        n_iter.div_ceil(THINNING_THRESHOLD)
    });

    let mut iterations = Vec::new();
    let mut states = Vec::new();
    let mut cost_trace = options.record_cost.then(Vec::new);
    let mut smooth_trace = options.record_smoothness.then(Vec::new);

    let mut record = |i: usize, state: &NetworkState<T>,
                      iterations: &mut Vec<usize>,
                      states: &mut Vec<NetworkState<T>>,
                      cost_trace: &mut Option<Vec<T>>,
                      smooth_trace: &mut Option<Vec<T>>| {
        iterations.push(i);
        states.push(state.clone());
        if let Some(tr) = cost_trace.as_mut() {
            tr.push(global_cost(network, costs, params.eta, state));
        }
        if let Some(tr) = smooth_trace.as_mut() {
            tr.push(network.smoothness(state).expect("matching dimensions"));
        }
    };

    record(
        0,
        &state0,
        &mut iterations,
        &mut states,
        &mut cost_trace,
        &mut smooth_trace,
    );

    let mut state = state0;
    for i in 1..=n_iter {
        state = atc_step(network, costs, params, &state, &mut rng);
        if state.has_non_finite() {
            return Err(DiffusionError::Diverged { iteration: i });
        }
        if i % stride == 0 || i == n_iter {
            record(
                i,
                &state,
                &mut iterations,
                &mut states,
                &mut cost_trace,
                &mut smooth_trace,
            );
        }
    }

    Ok(Trajectory {
        seed,
        n_iter,
        stride,
        iterations,
        states,
        cost: cost_trace,
        smoothness: smooth_trace,
    })
}
