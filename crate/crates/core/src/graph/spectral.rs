//! Laplacian eigenbasis and the graph Fourier transform.
//!
//! A connected graph's Laplacian decomposes as `L = V diag(lambda) V^T` with
//! `0 = lambda_1 < lambda_2 <= ... <= lambda_N` and `v_1 = 1/sqrt(N)`. The
//! transform of a stacked state applies `V^T` blockwise: spectral block `m`
//! is `sum_k V[k,m] w_k`. Low eigenvalues carry the smooth content of the
//! signal; the quadratic form `sum_m lambda_m ||w_bar_m||^2` equals the
//! edge-sum smoothness measure.

use nalgebra::{DMatrix, DMatrixView, DVector};

use super::state::NetworkState;
use super::GraphError;
use crate::scalar::{real, Scalar};

/// Eigenvalue below this absolute threshold is snapped to exactly zero.
pub const LAMBDA1_SNAP_TOL: f64 = 1e-10;
/// A second eigenvalue at or below this threshold means the graph is
/// numerically disconnected.
pub const CONNECTIVITY_TOL: f64 = 1e-10;

/// Orthonormal eigenbasis of a connected graph's Laplacian.
///
/// Eigenvalues are sorted ascending with `lambda_1 = 0` exactly. The first
/// eigenvector is forced to `+1/sqrt(N)`; every other eigenvector has its
/// first nonzero entry normalized positive so spectral coordinates are
/// reproducible across runs. Within a repeated eigenvalue any orthonormal
/// basis of the eigenspace may be returned: callers must not rely on
/// individual eigenvectors inside such a block (compare subspace projectors
/// instead).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis<T: Scalar> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SpectralBasis<T> {
    /// Decompose a Laplacian matrix. Used by the network constructor; the
    /// matrix must be symmetric positive semi-definite with a simple zero
    /// eigenvalue (connected graph).
    pub(crate) fn decompose(laplacian: &DMatrix<T>) -> Result<Self, GraphError> {
        let n = laplacian.nrows();
        let eig = laplacian
            .clone()
            .try_symmetric_eigen(T::default_epsilon() * real(4.0), 10_000)
            .ok_or(GraphError::EigenSolverFailed)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[i]
                .partial_cmp(&eig.eigenvalues[j])
                .expect("symmetric eigenvalues are finite")
        });

        let mut eigenvalues = DVector::zeros(n);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvalues[dst] = eig.eigenvalues[src];
            eigenvectors
                .column_mut(dst)
                .copy_from(&eig.eigenvectors.column(src));
        }

        if eigenvalues[0].abs() < real(LAMBDA1_SNAP_TOL) {
            eigenvalues[0] = T::zero();
        }
        if n > 1 && eigenvalues[1] <= real(CONNECTIVITY_TOL) {
            return Err(GraphError::NumericallyDisconnected {
                lambda2: eigenvalues[1].as_f64(),
            });
        }

        // The zero eigenvector of a connected graph is unique up to sign:
        // overwrite it with the exact constant vector.
        let inv_sqrt_n = T::one() / real::<T>(n as f64).sqrt();
        eigenvectors
            .column_mut(0)
            .iter_mut()
            .for_each(|x| *x = inv_sqrt_n);

        // Sign convention for the rest: first nonzero entry positive.
        let tol = real(1e-12);
        for m in 1..n {
            let mut col = eigenvectors.column_mut(m);
            if let Some(lead) = col.iter().find(|x| x.abs() > tol).copied() {
                if lead < T::zero() {
                    col.iter_mut().for_each(|x| *x = -*x);
                }
            }
        }

        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in ascending order, `lambda_1 = 0`.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, m: usize) -> T {
        self.eigenvalues[m]
    }

    /// Algebraic connectivity `lambda_2`.
    pub fn lambda2(&self) -> T {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> T {
        self.eigenvalues[self.n() - 1]
    }

    /// Orthonormal eigenvector matrix `V`, columns `v_1..v_N`.
    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    /// Nonzero eigenvalues `lambda_2..lambda_N`.
    pub fn eigenvalues_rest(&self) -> DVector<T> {
        self.eigenvalues.rows(1, self.n() - 1).into_owned()
    }

    /// Eigenvectors `v_2..v_N` (columns), spanning the complement of the
    /// constant vector.
    pub fn eigenvectors_rest(&self) -> DMatrixView<'_, T> {
        self.eigenvectors.columns(1, self.n() - 1)
    }

    /// Reassemble `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let scaled = DMatrix::from_fn(self.n(), self.n(), |i, j| {
            self.eigenvectors[(i, j)] * self.eigenvalues[j]
        });
        scaled * self.eigenvectors.transpose()
    }

    fn check_state(&self, state: &NetworkState<T>) -> Result<(), GraphError> {
        if state.n_agents() != self.n() {
            return Err(GraphError::DimensionMismatch {
                expected: self.n(),
                got: state.n_agents(),
            });
        }
        Ok(())
    }

    /// Graph Fourier transform: block `m` of the output is
    /// `sum_k V[k,m] w_k`.
    pub fn gft(&self, state: &NetworkState<T>) -> Result<NetworkState<T>, GraphError> {
        self.check_state(state)?;
        let n = self.n();
        let dim = state.agent_dim();
        let mut out = NetworkState::zeros(n, dim);
        for m in 0..n {
            let mut acc = DVector::zeros(dim);
            for k in 0..n {
                acc.axpy(self.eigenvectors[(k, m)], &state.block(k).into_owned(), T::one());
            }
            out.set_block(m, &acc);
        }
        Ok(out)
    }

    /// Inverse transform; `igft(gft(x)) = x`.
    pub fn igft(&self, spectral: &NetworkState<T>) -> Result<NetworkState<T>, GraphError> {
        self.check_state(spectral)?;
        let n = self.n();
        let dim = spectral.agent_dim();
        let mut out = NetworkState::zeros(n, dim);
        for k in 0..n {
            let mut acc = DVector::zeros(dim);
            for m in 0..n {
                acc.axpy(self.eigenvectors[(k, m)], &spectral.block(m).into_owned(), T::one());
            }
            out.set_block(k, &acc);
        }
        Ok(out)
    }

    /// Smoothness in spectral form: `sum_{m>=2} lambda_m ||w_bar_m||^2`.
    pub fn spectral_smoothness(&self, state: &NetworkState<T>) -> Result<T, GraphError> {
        let bar = self.gft(state)?;
        let mut s = T::zero();
        for m in 1..self.n() {
            s += self.eigenvalues[m] * bar.block(m).norm_squared();
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Network;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn unit_triangle() -> Network<f64> {
        Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn unit_path2() -> Network<f64> {
        Network::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn complete_graph_spectrum() {
        // K_N has eigenvalues {0, N, ..., N}.
        let basis = unit_triangle().spectral().clone();
        assert_eq!(basis.eigenvalue(0), 0.0);
        assert_abs_diff_eq!(basis.eigenvalue(1), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(basis.eigenvalue(2), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn path2_spectrum_and_constant_vector() {
        let basis = unit_path2().spectral().clone();
        assert_eq!(basis.eigenvalue(0), 0.0);
        assert_abs_diff_eq!(basis.eigenvalue(1), 2.0, epsilon = 1e-12);
        let inv = 1.0 / 2.0f64.sqrt();
        assert_abs_diff_eq!(basis.eigenvectors()[(0, 0)], inv, epsilon = 1e-15);
        assert_abs_diff_eq!(basis.eigenvectors()[(1, 0)], inv, epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_and_reconstructs() {
        let net = Network::<f64>::from_edges(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 0.5),
                (2, 3, 2.0),
                (3, 4, 1.0),
                (4, 5, 0.25),
                (5, 0, 1.5),
                (1, 4, 0.75),
            ],
        )
        .unwrap();
        let basis = net.spectral();
        let vtv = basis.eigenvectors().transpose() * basis.eigenvectors();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(vtv[(i, j)], expect, epsilon = 1e-10);
            }
        }
        let rec = basis.reconstruct();
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(rec[(i, j)], net.laplacian()[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn consensus_state_is_dc_only() {
        let net = unit_triangle();
        let c = dvector![2.0, -1.0];
        let state = NetworkState::consensus(3, &c);
        let bar = net.spectral().gft(&state).unwrap();
        let sqrt_n = 3.0f64.sqrt();
        assert_abs_diff_eq!(bar.block_owned(0), &c * sqrt_n, epsilon = 1e-12);
        assert!(bar.block_norm(1) < 1e-12);
        assert!(bar.block_norm(2) < 1e-12);
    }

    #[test]
    fn path2_alternating_state_transform() {
        // w = (1, -1) on the two-node path maps to (0, sqrt(2)) with the
        // positive-leading-entry sign convention.
        let net = unit_path2();
        let state = NetworkState::from_blocks(&[dvector![1.0], dvector![-1.0]]);
        let bar = net.spectral().gft(&state).unwrap();
        assert_abs_diff_eq!(bar.block_owned(0)[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bar.block_owned(1)[0].abs(), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gft_dimension_mismatch_rejected() {
        let net = unit_triangle();
        let state = NetworkState::<f64>::zeros(4, 2);
        assert!(matches!(
            net.spectral().gft(&state),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }
}
