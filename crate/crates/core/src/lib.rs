//! Multitask diffusion learning over graphs with Laplacian regularization.
//!
//! Agents on a connected weighted graph each estimate their own parameter
//! vector by stochastic gradient steps, while a Laplacian smoothness penalty
//! of strength `eta` couples neighboring estimates. This crate provides:
//!
//! - [`graph`]: weighted graphs, Laplacians, eigenbases, the graph Fourier
//!   transform, and smoothness measures;
//! - [`costs`]: per-agent risk models (quadratic and logistic) with exact and
//!   stochastic gradient oracles, Hessian bounds, and gradient-noise moment
//!   estimation;
//! - [`diffusion`]: the adapt-then-combine recursion, its step-size limits,
//!   the combination-matrix form, and the deterministic fixed-point solver;
//! - [`analysis`]: the analytical objects of the stability theory (limiting
//!   point, spectral block form, closed-form fixed-point bias, moment-bound
//!   recursions) and Monte Carlo moment estimation to verify them;
//! - [`harness`]: experiment configs, synthetic data, the classification
//!   benchmark, and CSV/JSON report pipelines behind the CLI.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix `f64`, which is what the CLI and the reference
//! tolerances use.

pub mod analysis;
pub(crate) mod linalg;
pub mod costs;
pub mod diffusion;
pub mod graph;
pub mod harness;
pub mod scalar;

pub use scalar::Scalar;

/// `f64` network.
pub type Network64 = graph::Network<f64>;
/// `f64` Laplacian eigenbasis.
pub type SpectralBasis64 = graph::SpectralBasis<f64>;
/// `f64` stacked network state.
pub type NetworkState64 = graph::NetworkState<f64>;
/// `f64` agent cost.
pub type AgentCost64 = costs::AgentCost<f64>;
/// `f64` gradient-noise profile.
pub type NoiseProfile64 = costs::NoiseProfile<f64>;
/// `f64` step-size / regularization parameters.
pub type AlgorithmParams64 = diffusion::AlgorithmParams<f64>;
/// `f64` diffusion trajectory.
pub type Trajectory64 = diffusion::Trajectory<f64>;
