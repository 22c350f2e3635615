//! Spectral block form of the limiting point.
//!
//! In the Laplacian eigenbasis the stationarity system splits into a DC
//! block (the eigenvector `1/sqrt(N)`) and the orthogonal rest. With
//! `Q = Vbar^T H_eta Vbar + eta Lambda (x) I` partitioned accordingly, the
//! transformed limiting point satisfies
//!
//! ```text
//! w_bar_eta = [ I   Q11^{-1} Q12 (I - K) ] [ w_bar_o_1      ]
//!             [ 0   K                    ] [ [w_bar_o]_{2:N} ]
//! K = I - eta G (Lambda_o (x) I),   G = (Q22 - Q12^T Q11^{-1} Q12)^{-1}
//! ```
//!
//! and `||K||_2 <= max_k lambda_{k,max} / (eta lambda_2 + min_k
//! lambda_{k,min})`: stronger regularization or better connectivity shrink
//! the non-DC content of the limiting point, and with it the bias
//! `W_eta - W_o` for smooth task vectors.

use nalgebra::{DMatrix, DVector};

use super::{averaged_hessian, limiting_point, AnalysisError, DEFAULT_LIMITING_TOL};
use crate::costs::AgentCost;
use crate::diffusion::check_costs;
use crate::graph::{Network, NetworkState};
use crate::linalg::spectral_norm;
use crate::scalar::{real, Scalar};

/// Blocks of the spectral form, all expressed in the eigenbasis.
#[derive(Debug, Clone)]
pub struct Lemma1Blocks<T: Scalar> {
    /// `M x M` DC block: the average of the segment-averaged Hessians.
    pub q11: DMatrix<T>,
    /// `M x M(N-1)` coupling block.
    pub q12: DMatrix<T>,
    /// `M(N-1)` square block including the `eta Lambda_o` shift.
    pub q22: DMatrix<T>,
    /// Inverse Schur complement `(Q22 - Q12^T Q11^{-1} Q12)^{-1}`.
    pub g: DMatrix<T>,
    /// `K = I - eta G (Lambda_o (x) I)`.
    pub k: DMatrix<T>,
    /// Spectral norm of `K`.
    pub k_norm: T,
    /// Bound `max_k lambda_{k,max} / (eta lambda_2 + min_k lambda_{k,min})`.
    pub k_bound: T,
}

impl<T: Scalar> Lemma1Blocks<T> {
    /// Apply the block formula to the spectral coordinates of the
    /// individual-minimizer vector, producing the spectral coordinates of
    /// the limiting point.
    pub fn apply(&self, w_bar_o: &NetworkState<T>) -> NetworkState<T> {
        let n = w_bar_o.n_agents();
        let m = w_bar_o.agent_dim();
        let rest_len = m * (n - 1);
        let rest = w_bar_o.as_vector().rows(m, rest_len).into_owned();

        let k_rest = &self.k * &rest;
        let identity = DMatrix::identity(rest_len, rest_len);
        let q11_inv = self
            .q11
            .clone()
            .try_inverse()
            .expect("Q11 validated positive definite at construction");
        let dc_correction = &q11_inv * &self.q12 * ((&identity - &self.k) * &rest);
        let dc = w_bar_o.block_owned(0) + dc_correction;

        let mut out = DVector::zeros(n * m);
        out.rows_mut(0, m).copy_from(&dc);
        out.rows_mut(m, rest_len).copy_from(&k_rest);
        NetworkState::from_stacked(out, n, m)
    }
}

/// Assemble the spectral blocks at regularization strength `eta`, given the
/// limiting point `w_eta` (used to average each Hessian along the segment
/// from the individual minimizer; exact for quadratic costs).
pub fn lemma1_blocks<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    eta: T,
    w_eta: &NetworkState<T>,
) -> Result<Lemma1Blocks<T>, AnalysisError> {
    let dim = check_costs(network, costs)?;
    let n = network.n_agents();
    let rest = n - 1;
    let basis = network.spectral();
    let v = basis.eigenvectors();

    // Segment-averaged Hessians per agent.
    let h_avg: Vec<DMatrix<T>> = costs
        .iter()
        .enumerate()
        .map(|(k, c)| averaged_hessian(c, &c.minimizer(), &w_eta.block_owned(k)))
        .collect();

    // Congruence transforms of the block-diagonal Hessian: the (a, b)
    // spectral block is sum_k V[k,a] V[k,b] H_k.
    let mut q11 = DMatrix::zeros(dim, dim);
    for k in 0..n {
        q11 += &h_avg[k] * (v[(k, 0)] * v[(k, 0)]);
    }
    if nalgebra::Cholesky::new(q11.clone()).is_none() {
        return Err(AnalysisError::Q11NotPositiveDefinite);
    }

    let mut q12 = DMatrix::zeros(dim, dim * rest);
    for j in 0..rest {
        let mut block = DMatrix::zeros(dim, dim);
        for k in 0..n {
            block += &h_avg[k] * (v[(k, 0)] * v[(k, j + 1)]);
        }
        q12.view_mut((0, j * dim), (dim, dim)).copy_from(&block);
    }

    let mut q22 = DMatrix::zeros(dim * rest, dim * rest);
    for i in 0..rest {
        for j in 0..rest {
            let mut block = DMatrix::zeros(dim, dim);
            for k in 0..n {
                block += &h_avg[k] * (v[(k, i + 1)] * v[(k, j + 1)]);
            }
            if i == j {
                let shift = eta * basis.eigenvalue(i + 1);
                for d in 0..dim {
                    block[(d, d)] += shift;
                }
            }
            q22.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&block);
        }
    }

    let q11_inv = q11
        .clone()
        .try_inverse()
        .ok_or(AnalysisError::Q11NotPositiveDefinite)?;
    let schur = &q22 - q12.transpose() * &q11_inv * &q12;
    let g = schur
        .try_inverse()
        .ok_or(AnalysisError::SchurSingular)?;

    // K = I - eta G (Lambda_o (x) I): scale G's block-columns by lambda.
    let mut k_mat = DMatrix::identity(dim * rest, dim * rest);
    for j in 0..rest {
        let lambda = basis.eigenvalue(j + 1);
        for col in (j * dim)..((j + 1) * dim) {
            for row in 0..dim * rest {
                k_mat[(row, col)] -= eta * g[(row, col)] * lambda;
            }
        }
    }

    let k_norm = spectral_norm(&k_mat);
    let (mut min_lo, mut max_hi) = (T::max_value().unwrap(), T::zero());
    for c in costs {
        let (lo, hi) = c.hessian_bounds();
        min_lo = min_lo.min(lo);
        max_hi = max_hi.max(hi);
    }
    let k_bound = max_hi / (eta * basis.lambda2() + min_lo);

    Ok(Lemma1Blocks {
        q11,
        q12,
        q22,
        g,
        k: k_mat,
        k_norm,
        k_bound,
    })
}

/// Full consistency report: the block formula against the direct solve.
#[derive(Debug, Clone)]
pub struct Lemma1Report<T: Scalar> {
    /// Relative error between the block-formula spectral coordinates and
    /// the transformed direct solve.
    pub rel_err: T,
    pub k_norm: T,
    pub k_bound: T,
    /// `||w_bar_eta - w_bar_o|| = ||W_eta - W_o||` (the bias size).
    pub bias_norm: T,
}

impl<T: Scalar> Lemma1Report<T> {
    pub fn norm_within_bound(&self) -> bool {
        self.k_norm <= self.k_bound + real(1e-10)
    }
}

/// Compute the limiting point directly, assemble the blocks, and compare
/// the two routes in spectral coordinates.
pub fn lemma1_check<T: Scalar>(
    network: &Network<T>,
    costs: &[AgentCost<T>],
    eta: T,
) -> Result<Lemma1Report<T>, AnalysisError> {
    let lp = limiting_point(network, costs, eta, real(DEFAULT_LIMITING_TOL))?;
    let blocks = lemma1_blocks(network, costs, eta, &lp.state)?;
    let w_o = super::individual_minimizers(costs);
    let w_bar_o = network.spectral().gft(&w_o)?;
    let reconstructed = blocks.apply(&w_bar_o);
    let denom = lp.spectral.norm().max(T::one());
    let rel_err = reconstructed.minus(&lp.spectral).norm() / denom;
    let bias_norm = lp.state.minus(&w_o).norm();
    Ok(Lemma1Report {
        rel_err,
        k_norm: blocks.k_norm,
        k_bound: blocks.k_bound,
        bias_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::QuadraticCost;
    use crate::graph::Network;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| f64::standard_normal(rng));
        let mut spd = &a * a.transpose();
        for i in 0..dim {
            spd[(i, i)] += 0.5 + f64::unit_uniform(rng);
        }
        spd
    }

    fn random_quadratic_network(
        seed: u64,
        n: usize,
        dim: usize,
    ) -> (Network<f64>, Vec<AgentCost<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for k in 0..n {
            edges.push((k, (k + 1) % n, 0.5 + f64::unit_uniform(&mut rng)));
        }
        for a in 0..n {
            for b in (a + 2)..n {
                if (a, b) != (0, n - 1) && f64::unit_uniform(&mut rng) < 0.35 {
                    edges.push((a, b, 0.5 + f64::unit_uniform(&mut rng)));
                }
            }
        }
        let net = Network::from_edges(n, &edges).unwrap();
        let costs: Vec<AgentCost<f64>> = (0..n)
            .map(|_| {
                let h = random_spd(dim, &mut rng);
                let w_o = DVector::from_fn(dim, |_, _| 2.0 * f64::standard_normal(&mut rng));
                AgentCost::Quadratic(QuadraticCost::new(h, w_o).unwrap())
            })
            .collect();
        (net, costs)
    }

    #[test]
    fn eta_zero_gives_identity_k() {
        let (net, costs) = random_quadratic_network(3, 4, 2);
        let lp = limiting_point(&net, &costs, 0.0, 1e-12).unwrap();
        let blocks = lemma1_blocks(&net, &costs, 0.0, &lp.state).unwrap();
        let identity = DMatrix::<f64>::identity(blocks.k.nrows(), blocks.k.ncols());
        assert_eq!(blocks.k, identity);
    }

    #[test]
    fn consensus_tasks_have_no_rest_content() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let w = dvector![1.0, 2.0];
        let costs: Vec<AgentCost<f64>> = (0..3)
            .map(|_| AgentCost::Quadratic(QuadraticCost::isotropic(2, 1.0, w.clone()).unwrap()))
            .collect();
        let lp = limiting_point(&net, &costs, 2.0, 1e-12).unwrap();
        // Spectral content: DC block sqrt(3) w, everything else zero.
        assert_abs_diff_eq!(
            (lp.spectral.block_owned(0) - &w * 3.0f64.sqrt()).norm(),
            0.0,
            epsilon = 1e-10
        );
        for m in 1..3 {
            assert!(lp.spectral.block_norm(m) < 1e-10);
        }
    }

    #[test]
    fn block_formula_matches_direct_solve_on_random_networks() {
        for seed in 0..10u64 {
            let n = 3 + (seed as usize % 4);
            let dim = 1 + (seed as usize % 3);
            let (net, costs) = random_quadratic_network(seed, n, dim);
            for eta in [0.1, 1.0, 10.0] {
                let report = lemma1_check(&net, &costs, eta).unwrap();
                assert!(
                    report.rel_err < 1e-8,
                    "seed {seed} eta {eta}: rel err {}",
                    report.rel_err
                );
                assert!(
                    report.norm_within_bound(),
                    "seed {seed} eta {eta}: ||K|| = {} > bound {}",
                    report.k_norm,
                    report.k_bound
                );
            }
        }
    }

    #[test]
    fn five_agent_reference_case() {
        let (net, costs) = random_quadratic_network(42, 5, 2);
        let report = lemma1_check(&net, &costs, 1.0).unwrap();
        assert!(report.rel_err < 1e-8);
        assert!(report.norm_within_bound());
    }
}
