//! Crate-internal helpers for stacked (block) linear algebra.

use nalgebra::{DMatrix, DVector};

use crate::costs::AgentCost;
use crate::graph::{Network, NetworkState};
use crate::scalar::Scalar;

/// `L (x) I_M`: the Laplacian acting blockwise on stacked states.
pub(crate) fn laplacian_kron<T: Scalar>(network: &Network<T>, agent_dim: usize) -> DMatrix<T> {
    network
        .laplacian()
        .kronecker(&DMatrix::identity(agent_dim, agent_dim))
}

/// Block-diagonal matrix from per-agent blocks.
pub(crate) fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut offset = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((offset, offset), (n, n)).copy_from(b);
        offset += n;
    }
    out
}

/// `col{grad J_k(w_k)}` over the stacked state.
pub(crate) fn stacked_gradient<T: Scalar>(
    costs: &[AgentCost<T>],
    state: &NetworkState<T>,
) -> DVector<T> {
    let m = state.agent_dim();
    let mut out = DVector::zeros(state.len());
    for (k, cost) in costs.iter().enumerate() {
        let g = cost.gradient(&state.block_owned(k));
        out.rows_mut(k * m, m).copy_from(&g);
    }
    out
}

/// Spectral (2-induced) norm via the symmetric eigenvalues of `A^T A`.
pub(crate) fn spectral_norm<T: Scalar>(a: &DMatrix<T>) -> T {
    let gram = a.transpose() * a;
    let eig = gram
        .try_symmetric_eigen(T::default_epsilon() * crate::scalar::real(4.0), 10_000)
        .expect("gram matrix eigendecomposition");
    eig.eigenvalues.max().max(T::zero()).sqrt()
}

/// Spectral radius of `C G` for symmetric `C` and nonnegative diagonal `g`:
/// the nonzero spectrum matches the symmetric `G^{1/2} C G^{1/2}`.
pub(crate) fn spectral_radius_sym_times_diag<T: Scalar>(c: &DMatrix<T>, g: &DVector<T>) -> T {
    let n = g.len();
    let sqrt_g: Vec<T> = g.iter().map(|x| x.max(T::zero()).sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| sqrt_g[i] * c[(i, j)] * sqrt_g[j]);
    let eig = sym
        .try_symmetric_eigen(T::default_epsilon() * crate::scalar::real(4.0), 10_000)
        .expect("symmetrized product eigendecomposition");
    eig.eigenvalues.iter().fold(T::zero(), |a, &x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn block_diag_layout() {
        let a = dmatrix![1.0, 2.0; 3.0, 4.0];
        let b = dmatrix![5.0];
        let d = block_diag(&[a, b]);
        assert_eq!(d.nrows(), 3);
        assert_eq!(d[(0, 1)], 2.0);
        assert_eq!(d[(2, 2)], 5.0);
        assert_eq!(d[(2, 0)], 0.0);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = dmatrix![3.0, 0.0; 0.0, -4.0];
        assert_abs_diff_eq!(spectral_norm(&a), 4.0, epsilon = 1e-10);
    }

    #[test]
    fn radius_of_symmetric_times_diag() {
        let c = dmatrix![0.5, 0.5; 0.5, 0.5];
        let g = nalgebra::dvector![1.0, 1.0];
        // C itself is the doubly stochastic rank-1 projector: rho = 1.
        assert_abs_diff_eq!(spectral_radius_sym_times_diag(&c, &g), 1.0, epsilon = 1e-10);
        let g = nalgebra::dvector![0.25, 0.25];
        assert_abs_diff_eq!(spectral_radius_sym_times_diag(&c, &g), 0.25, epsilon = 1e-10);
    }
}
