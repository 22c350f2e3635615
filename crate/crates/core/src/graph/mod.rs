//! Weighted undirected graphs, their Laplacians, and spectral tools.
//!
//! A [`Network`] owns the symmetric adjacency matrix `A` (zero diagonal,
//! nonnegative weights), the degree vector `d_k = sum_l a_kl`, the Laplacian
//! `L = D - A`, and the eigenbasis of `L`. Construction verifies that the
//! graph is connected; every accessor after that point is infallible and the
//! value is safe to share across threads.
//!
//! Node indices are 0-based everywhere: in the API, in edge-list files, and
//! in coordinate/dataset CSVs.

mod io;
mod spectral;
mod state;

pub use io::{read_coordinates, read_edge_list, write_edge_list};
pub use spectral::{SpectralBasis, CONNECTIVITY_TOL, LAMBDA1_SNAP_TOL};
pub use state::NetworkState;

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for {n_agents} agents")]
    NodeOutOfRange { index: usize, n_agents: usize },

    #[error("self-loop on node {node} is not allowed")]
    SelfLoop { node: usize },

    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: usize, b: usize },

    #[error("edge ({a}, {b}) has nonpositive weight {weight}")]
    NonPositiveWeight { a: usize, b: usize, weight: f64 },

    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("adjacency matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },

    #[error("adjacency diagonal entry {node} is nonzero")]
    NonZeroDiagonal { node: usize },

    #[error("adjacency entry ({i}, {j}) is negative")]
    NegativeEntry { i: usize, j: usize },

    #[error("graph is disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },

    #[error(
        "k-nearest-neighbor graph with k={k_neighbors} is disconnected \
         (components: {components:?}); increase k_neighbors"
    )]
    KnnDisconnected {
        k_neighbors: usize,
        components: Vec<Vec<usize>>,
    },

    #[error("need n_agents > k_neighbors >= 1, got n={n_agents}, k={k_neighbors}")]
    BadKnnArguments { n_agents: usize, k_neighbors: usize },

    #[error("symmetric eigensolver failed to converge")]
    EigenSolverFailed,

    #[error("graph is numerically disconnected: lambda_2 = {lambda2:e}")]
    NumericallyDisconnected { lambda2: f64 },

    #[error("state has {got} agent blocks, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("agent dimension mismatch: state has {got}, expected {expected}")]
    AgentDimMismatch { expected: usize, got: usize },

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Connected weighted undirected graph over `N` agents.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    n_agents: usize,
    adjacency: DMatrix<T>,
    degree: DVector<T>,
    laplacian: DMatrix<T>,
    basis: SpectralBasis<T>,
}

impl<T: Scalar> Network<T> {
    /// Build a network from an undirected weighted edge list (0-based node
    /// indices). Rejects self-loops, duplicate edges, nonpositive weights,
    /// and disconnected graphs (the error reports the component partition).
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize, T)]) -> Result<Self, GraphError> {
        let mut adjacency = DMatrix::zeros(n_agents, n_agents);
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        for &(a, b, w) in edges {
            for node in [a, b] {
                if node >= n_agents {
                    return Err(GraphError::NodeOutOfRange {
                        index: node,
                        n_agents,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { node: a });
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { a: key.0, b: key.1 });
            }
            if w <= T::zero() {
                return Err(GraphError::NonPositiveWeight {
                    a,
                    b,
                    weight: w.as_f64(),
                });
            }
            adjacency[(a, b)] = w;
            adjacency[(b, a)] = w;
        }
        Self::from_adjacency(adjacency)
    }

    /// Build a network from a symmetric adjacency matrix with zero diagonal
    /// and nonnegative entries.
    pub fn from_adjacency(adjacency: DMatrix<T>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        let n_agents = rows;
        for i in 0..n_agents {
            if adjacency[(i, i)] != T::zero() {
                return Err(GraphError::NonZeroDiagonal { node: i });
            }
            for j in (i + 1)..n_agents {
                if adjacency[(i, j)] != adjacency[(j, i)] {
                    return Err(GraphError::NotSymmetric { i, j });
                }
                if adjacency[(i, j)] < T::zero() {
                    return Err(GraphError::NegativeEntry { i, j });
                }
            }
        }

        let components = connected_components(&adjacency);
        if components.len() != 1 {
            return Err(GraphError::Disconnected { components });
        }

        let degree = DVector::from_fn(n_agents, |k, _| adjacency.row(k).sum());
        let mut laplacian = -adjacency.clone();
        for k in 0..n_agents {
            laplacian[(k, k)] = degree[k];
        }
        let basis = SpectralBasis::decompose(&laplacian)?;

        Ok(Self {
            n_agents,
            adjacency,
            degree,
            laplacian,
            basis,
        })
    }

    /// Build a k-nearest-neighbor graph from points in the plane, with edge
    /// weights from a Gaussian kernel on pairwise Euclidean distances,
    /// normalized per neighborhood:
    ///
    /// ```text
    /// p_kl = exp(-d_kl^2) / sqrt( sum_{m in N_k} exp(-d_km^2)
    ///                           * sum_{n in N_l} exp(-d_ln^2) )   for l in N_k
    /// a_kl = (p_kl + p_lk) / 2
    /// ```
    ///
    /// `N_k` is the set of `k_neighbors` nearest neighbors of node `k`, ties
    /// broken by lowest node index. `distance_scale` multiplies every
    /// distance before the kernel is applied (whether raw distances should
    /// be normalized first is application-dependent, so the scale is
    /// exposed; pass `1.0` for raw distances). Coinciding points are allowed
    /// (`d = 0` contributes `exp(0)`); a disconnected result is rejected
    /// with advice to increase `k_neighbors`.
    pub fn knn_gaussian(
        coordinates: &[(T, T)],
        k_neighbors: usize,
        distance_scale: T,
    ) -> Result<Self, GraphError> {
        let n = coordinates.len();
        if k_neighbors == 0 || n <= k_neighbors {
            return Err(GraphError::BadKnnArguments {
                n_agents: n,
                k_neighbors,
            });
        }

        let dist_sq = |a: usize, b: usize| -> T {
            let dx = (coordinates[a].0 - coordinates[b].0) * distance_scale;
            let dy = (coordinates[a].1 - coordinates[b].1) * distance_scale;
            dx * dx + dy * dy
        };

        // k nearest neighbors per node, ties broken by lowest index.
        let mut neighbor_sets: Vec<Vec<usize>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != k).collect();
            others.sort_by(|&a, &b| {
                dist_sq(k, a)
                    .partial_cmp(&dist_sq(k, b))
                    .expect("finite distances")
                    .then(a.cmp(&b))
            });
            others.truncate(k_neighbors);
            neighbor_sets.push(others);
        }

        let normalizer: Vec<T> = (0..n)
            .map(|k| {
                neighbor_sets[k]
                    .iter()
                    .fold(T::zero(), |acc, &m| acc + (-dist_sq(k, m)).exp())
            })
            .collect();

        let mut adjacency = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in (k + 1)..n {
                let p_kl = if neighbor_sets[k].contains(&l) {
                    (-dist_sq(k, l)).exp() / (normalizer[k] * normalizer[l]).sqrt()
                } else {
                    T::zero()
                };
                let p_lk = if neighbor_sets[l].contains(&k) {
                    (-dist_sq(k, l)).exp() / (normalizer[l] * normalizer[k]).sqrt()
                } else {
                    T::zero()
                };
                let a = (p_kl + p_lk) / real(2.0);
                adjacency[(k, l)] = a;
                adjacency[(l, k)] = a;
            }
        }

        Self::from_adjacency(adjacency).map_err(|e| match e {
            GraphError::Disconnected { components } => GraphError::KnnDisconnected {
                k_neighbors,
                components,
            },
            other => other,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn adjacency(&self) -> &DMatrix<T> {
        &self.adjacency
    }

    pub fn degree(&self, k: usize) -> T {
        self.degree[k]
    }

    pub fn degrees(&self) -> &DVector<T> {
        &self.degree
    }

    pub fn max_degree(&self) -> T {
        self.degree.max()
    }

    pub fn laplacian(&self) -> &DMatrix<T> {
        &self.laplacian
    }

    /// Cached eigenbasis of the Laplacian.
    pub fn spectral(&self) -> &SpectralBasis<T> {
        &self.basis
    }

    /// Neighbors of `k` with their edge weights.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let row = self.adjacency.row(k).into_owned();
        (0..self.n_agents).filter_map(move |l| {
            let w = row[l];
            (w > T::zero()).then_some((l, w))
        })
    }

    fn check_state(&self, state: &NetworkState<T>) -> Result<(), GraphError> {
        if state.n_agents() != self.n_agents {
            return Err(GraphError::DimensionMismatch {
                expected: self.n_agents,
                got: state.n_agents(),
            });
        }
        Ok(())
    }

    /// Smoothness of a stacked state over the graph:
    /// `S(W) = W^T (L (x) I) W = 1/2 sum_k sum_l a_kl ||w_k - w_l||^2`.
    /// Zero exactly on consensus states; agrees with the spectral form
    /// `sum_m lambda_m ||w_bar_m||^2`.
    pub fn smoothness(&self, state: &NetworkState<T>) -> Result<T, GraphError> {
        self.check_state(state)?;
        let mut s = T::zero();
        for k in 0..self.n_agents {
            for l in (k + 1)..self.n_agents {
                let w = self.adjacency[(k, l)];
                if w > T::zero() {
                    let diff = state.block(k) - state.block(l);
                    s += w * diff.norm_squared();
                }
            }
        }
        Ok(s)
    }
}

/// Connected components of a nonnegative adjacency matrix, each sorted, in
/// order of their smallest member.
fn connected_components<T: Scalar>(adjacency: &DMatrix<T>) -> Vec<Vec<usize>> {
    let n = adjacency.nrows();
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut component = Vec::new();
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(node) = stack.pop() {
            component.push(node);
            for j in 0..n {
                if !visited[j] && adjacency[(node, j)] > T::zero() {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}
