//! Stacked network state: one parameter vector per agent.

use nalgebra::{DVector, DVectorView, DVectorViewMut};
use rand::Rng;

use crate::scalar::Scalar;

/// Block vector of `n_agents` agent parameter vectors, each of dimension
/// `agent_dim`. Block `k` addresses agent `k`; total dimension is
/// `n_agents * agent_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T: Scalar> {
    data: DVector<T>,
    n_agents: usize,
    agent_dim: usize,
}

impl<T: Scalar> NetworkState<T> {
    /// All-zeros state.
    pub fn zeros(n_agents: usize, agent_dim: usize) -> Self {
        Self {
            data: DVector::zeros(n_agents * agent_dim),
            n_agents,
            agent_dim,
        }
    }

    /// Wrap an already-stacked vector. Panics if the length is not
    /// `n_agents * agent_dim`.
    pub fn from_stacked(data: DVector<T>, n_agents: usize, agent_dim: usize) -> Self {
        assert_eq!(
            data.len(),
            n_agents * agent_dim,
            "stacked state length {} does not match {} agents x dim {}",
            data.len(),
            n_agents,
            agent_dim
        );
        Self {
            data,
            n_agents,
            agent_dim,
        }
    }

    /// Stack per-agent blocks. Panics on empty input or inconsistent block sizes.
    pub fn from_blocks(blocks: &[DVector<T>]) -> Self {
        assert!(!blocks.is_empty(), "need at least one agent block");
        let m = blocks[0].len();
        let mut data = DVector::zeros(blocks.len() * m);
        for (k, b) in blocks.iter().enumerate() {
            assert_eq!(b.len(), m, "agent block {k} has inconsistent dimension");
            data.rows_mut(k * m, m).copy_from(b);
        }
        Self {
            data,
            n_agents: blocks.len(),
            agent_dim: m,
        }
    }

    /// Fill each block with the entries produced by `f(agent, coord)`.
    pub fn from_fn(n_agents: usize, agent_dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut s = Self::zeros(n_agents, agent_dim);
        for k in 0..n_agents {
            for j in 0..agent_dim {
                s.data[k * agent_dim + j] = f(k, j);
            }
        }
        s
    }

    /// Consensus state: every agent holds a copy of `base`.
    pub fn consensus(n_agents: usize, base: &DVector<T>) -> Self {
        Self::from_fn(n_agents, base.len(), |_, j| base[j])
    }

    /// State with every block drawn i.i.d. from the standard normal.
    pub fn standard_normal<R: Rng + ?Sized>(n_agents: usize, agent_dim: usize, rng: &mut R) -> Self {
        let data = DVector::from_fn(n_agents * agent_dim, |_, _| T::standard_normal(rng));
        Self::from_stacked(data, n_agents, agent_dim)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn agent_dim(&self) -> usize {
        self.agent_dim
    }

    /// Total stacked dimension `n_agents * agent_dim`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Agent `k`'s parameter vector.
    pub fn block(&self, k: usize) -> DVectorView<'_, T> {
        self.data.rows(k * self.agent_dim, self.agent_dim)
    }

    pub fn block_mut(&mut self, k: usize) -> DVectorViewMut<'_, T> {
        self.data.rows_mut(k * self.agent_dim, self.agent_dim)
    }

    pub fn set_block(&mut self, k: usize, value: &DVector<T>) {
        self.block_mut(k).copy_from(value);
    }

    pub fn block_owned(&self, k: usize) -> DVector<T> {
        self.block(k).into_owned()
    }

    /// The underlying stacked vector.
    pub fn as_vector(&self) -> &DVector<T> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<T> {
        self.data
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm(&self) -> T {
        self.data.norm()
    }

    /// Euclidean norm of agent `k`'s block.
    pub fn block_norm(&self, k: usize) -> T {
        self.block(k).norm()
    }

    /// `self - other`, checked for matching shape.
    pub fn minus(&self, other: &Self) -> Self {
        assert_eq!(self.n_agents, other.n_agents);
        assert_eq!(self.agent_dim, other.agent_dim);
        Self {
            data: &self.data - &other.data,
            n_agents: self.n_agents,
            agent_dim: self.agent_dim,
        }
    }

    /// True if any entry is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }

    /// Same shape check used by operations that combine two states.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_agents == other.n_agents && self.agent_dim == other.agent_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn blocks_address_agents() {
        let s = NetworkState::from_blocks(&[dvector![1.0, 2.0], dvector![3.0, 4.0]]);
        assert_eq!(s.n_agents(), 2);
        assert_eq!(s.agent_dim(), 2);
        assert_eq!(s.block_owned(1), dvector![3.0, 4.0]);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn consensus_repeats_base() {
        let s = NetworkState::consensus(3, &dvector![5.0, -1.0]);
        for k in 0..3 {
            assert_eq!(s.block_owned(k), dvector![5.0, -1.0]);
        }
    }

    #[test]
    fn minus_is_blockwise() {
        let a = NetworkState::from_blocks(&[dvector![1.0], dvector![2.0]]);
        let b = NetworkState::from_blocks(&[dvector![0.5], dvector![1.0]]);
        let d = a.minus(&b);
        assert_eq!(d.block_owned(0), dvector![0.5]);
        assert_eq!(d.block_owned(1), dvector![1.0]);
    }
}
