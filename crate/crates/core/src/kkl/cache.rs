//! First variation of `p -> KKL_alpha(p || q)` and its spatial gradient.
//!
//! With `S(x)_i = sqrt(w_i) k(x, x_i)` and `T(x) = psi phi(x)`,
//!
//! ```text
//! F'(x) = k(x, x) + S(x)^T g(M_p) S(x) - T(x)^T (g(K) + A) T(x),   g(t) = log(t) / t
//! A = C (L o (C_n^T C_n)) C^T
//! ```
//!
//! where `C` holds the retained eigenvectors of `K`, `C_n` its first `n` rows,
//! and `L` the Loewner matrix of `log`. For the Gaussian kernel `k(x, x) = 1`.
//! All matrices are frozen at construction; only `S` and `T` depend on `x`.
//!
//! Evaluation works in eigen-coordinates (`U^T S`, `C^T T`). The explicit
//! matrices `g(M_p)` and `g(K) + A` have entries of order `log(eta) / eta` for
//! eigenvalues near the floor, so products with them lose all precision, while
//! the projections onto the small eigenvectors are themselves of order
//! `sqrt(eta)` and keep the products bounded.

use nalgebra::{DMatrix, DVector};

use super::{check_inputs, cross_term, factor_scales, joint_point, weighted_gram, KklOptions};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;
use crate::spectral::{loewner, sym_eig_with, symmetrize, EigenDecomposition, SpectralFn};

/// Eigendecompositions and derived matrices for one `(p, q, k, alpha)`.
/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    p: DiscreteMeasure,
    q: DiscreteMeasure,
    kernel: KernelSpec,
    alpha: f64,
    sqrt_w: Vec<f64>,
    scales: Vec<f64>,
    eig_entropy: EigenDecomposition,
    eig_joint: EigenDecomposition,
    // retained eigenvectors and g(eigenvalues) of M_p
    u_entropy: DMatrix<f64>,
    g_entropy_diag: Vec<f64>,
    // retained eigenvectors of K and diag(g(eta)) + L o (C_n^T C_n)
    c_joint: DMatrix<f64>,
    h_joint: DMatrix<f64>,
    a_matrix: DMatrix<f64>,
    g_entropy: DMatrix<f64>,
    g_joint_a: DMatrix<f64>,
    entropy_term: f64,
    cross_term: f64,
}

impl SpectralCache {
    pub fn build(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<Self> {
        Self::build_with(p, q, k, alpha, &KklOptions::default())
    }

    pub fn build_with(
        p: &DiscreteMeasure,
        q: &DiscreteMeasure,
        k: &KernelSpec,
        alpha: f64,
        opts: &KklOptions,
    ) -> Result<Self> {
        check_inputs(p, q, k, alpha)?;
        let n = p.len();
        let scales = factor_scales(p, q, alpha);
        let total = scales.len();

        let eig_entropy = sym_eig_with(&weighted_gram(p, k), opts.eig)?;
        let g_entropy = eig_entropy.apply(SpectralFn::LogOverX);

        let mut joint = DMatrix::zeros(total, total);
        for a in 0..total {
            let za = joint_point(p, q, a);
            for b in 0..=a {
                let v = scales[a] * scales[b] * k.eval(za, joint_point(p, q, b));
                joint[(a, b)] = v;
                joint[(b, a)] = v;
            }
        }
        let eig_joint = sym_eig_with(&joint, opts.eig)?;
        let c = eig_joint.retained_vectors();
        let c_n = c.rows(0, n);

        // weights of A in the eigenbasis: L[j,k] <a_j, a_k>
        let mut inner = c_n.transpose() * c_n;
        let table = loewner(&eig_joint, opts.degeneracy_tol).into_matrix();
        let r = inner.nrows();
        for j in 0..r {
            for l in 0..r {
                if j != l && inner[(j, l)].abs() <= opts.cross_skip_tol {
                    inner[(j, l)] = 0.0;
                } else {
                    inner[(j, l)] *= table[(j, l)];
                }
            }
        }
        let mut a_matrix = &c * &inner * c.transpose();
        symmetrize(&mut a_matrix);

        for (j, eta) in eig_joint.retained_values().enumerate() {
            inner[(j, j)] += SpectralFn::LogOverX.eval(eta);
        }
        symmetrize(&mut inner);
        let mut g_joint_a = &c * &inner * c.transpose();
        symmetrize(&mut g_joint_a);
        let u_entropy = eig_entropy.retained_vectors();
        let g_entropy_diag = eig_entropy.retained_values().map(|v| SpectralFn::LogOverX.eval(v)).collect();

        let entropy_term = eig_entropy.entropy_trace();
        let cross = cross_term(&eig_joint, n, alpha);
        Ok(Self {
            p: p.clone(),
            q: q.clone(),
            kernel: *k,
            alpha,
            sqrt_w: p.weights().iter().map(|w| w.sqrt()).collect(),
            scales,
            eig_entropy,
            eig_joint,
            u_entropy,
            g_entropy_diag,
            c_joint: c,
            h_joint: inner,
            a_matrix,
            g_entropy,
            g_joint_a,
            entropy_term,
            cross_term: cross,
        })
    }

    pub fn p(&self) -> &DiscreteMeasure {
        &self.p
    }

    pub fn q(&self) -> &DiscreteMeasure {
        &self.q
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eig_entropy(&self) -> &EigenDecomposition {
        &self.eig_entropy
    }

    pub fn eig_joint(&self) -> &EigenDecomposition {
        &self.eig_joint
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_matrix
    }

    /// `g(M_p)`, `n x n`.
    pub fn g_entropy(&self) -> &DMatrix<f64> {
        &self.g_entropy
    }

    /// `g(K) + A`, `(n + m) x (n + m)`.
    pub fn g_joint_plus_a(&self) -> &DMatrix<f64> {
        &self.g_joint_a
    }

    /// Unclamped `KKL_alpha(p || q)` from the cached spectra.
    pub fn value(&self) -> f64 {
        self.entropy_term - self.cross_term
    }

    pub fn entropy_term(&self) -> f64 {
        self.entropy_term
    }

    pub fn cross_term(&self) -> f64 {
        self.cross_term
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p.dim() {
            return Err(Error::DimensionMismatch { expected: self.p.dim(), found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        Ok(())
    }

    fn s_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.p.len(), |i, _| self.sqrt_w[i] * self.kernel.eval(x, self.p.point(i)))
    }

    fn t_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.scales.len(), |l, _| {
            self.scales[l] * self.kernel.eval(x, joint_point(&self.p, &self.q, l))
        })
    }

    // Rows `sqrt(w_i) grad_x k(x, x_i)`.
    fn s_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut j = DMatrix::zeros(self.p.len(), d);
        let mut row = vec![0.0; d];
        for i in 0..self.p.len() {
            row.iter_mut().for_each(|v| *v = 0.0);
            self.kernel.grad1_into(x, self.p.point(i), self.sqrt_w[i], &mut row);
            j.row_mut(i).copy_from_slice(&row);
        }
        j
    }

    fn t_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut j = DMatrix::zeros(self.scales.len(), d);
        let mut row = vec![0.0; d];
        for l in 0..self.scales.len() {
            row.iter_mut().for_each(|v| *v = 0.0);
            self.kernel.grad1_into(x, joint_point(&self.p, &self.q, l), self.scales[l], &mut row);
            j.row_mut(l).copy_from_slice(&row);
        }
        j
    }

    /// `F'(x)`.
    pub fn first_variation(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let z = self.u_entropy.tr_mul(&self.s_vector(x));
        let s_term: f64 = z.iter().zip(&self.g_entropy_diag).map(|(z, g)| g * z * z).sum();
        let y = self.c_joint.tr_mul(&self.t_vector(x));
        let t_term = y.dot(&(&self.h_joint * &y));
        Ok(self.kernel.eval(x, x) + s_term - t_term)
    }

    /// `grad F'(x)`, the Wasserstein velocity at `x`.
    pub fn wasserstein_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.kernel.diag_grad_into(x, 1.0, out);

        let z = self.u_entropy.tr_mul(&self.s_vector(x));
        let zj = self.u_entropy.tr_mul(&self.s_jacobian(x));
        for (t, (zt, g)) in z.iter().zip(&self.g_entropy_diag).enumerate() {
            let c = 2.0 * g * zt;
            for (o, v) in out.iter_mut().zip(zj.row(t).iter()) {
                *o += c * v;
            }
        }
        let y = self.c_joint.tr_mul(&self.t_vector(x));
        let yj = self.c_joint.tr_mul(&self.t_jacobian(x));
        let hy = &self.h_joint * &y;
        for (t, c) in hy.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(yj.row(t).iter()) {
                *o -= 2.0 * c * v;
            }
        }
    }

    /// Velocity at every atom of `p`, row-major `n x d`.
    pub fn gradients_at_atoms(&self) -> Vec<f64> {
        let d = self.p.dim();
        let mut out = vec![0.0; self.p.len() * d];
        for (i, chunk) in out.chunks_exact_mut(d).enumerate() {
            self.gradient_into(self.p.point(i), chunk);
        }
        out
    }
}

/// Free-function form: builds a cache and evaluates `F'(x)`.
pub fn first_variation(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    SpectralCache::build(p, q, k, alpha)?.first_variation(x)
}

/// Free-function form: builds a cache and evaluates `grad F'(x)`.
pub fn wasserstein_gradient(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    alpha: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    SpectralCache::build(p, q, k, alpha)?.wasserstein_gradient(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkl::kkl_alpha_unclamped;
    use crate::measure::{rng_stream, TargetSpec};
    use crate::spectral::{max_asymmetry, sym_eig};
    use rand::Rng;

    fn delta(x: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_rows(&[x.to_vec()]).unwrap()
    }

    #[test]
    fn single_shared_atom() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let z = [0.4, -1.2];
        for alpha in [0.1, 0.5, 0.9] {
            let cache = SpectralCache::build(&delta(&z), &delta(&z), &k, alpha).unwrap();
            assert_eq!(cache.eig_joint().retained(), 1);
            let c1 = [alpha.sqrt(), (1.0 - alpha).sqrt()];
            for i in 0..2 {
                for j in 0..2 {
                    let expect = alpha * c1[i] * c1[j];
                    assert!((cache.a_matrix()[(i, j)] - expect).abs() < 1e-14);
                }
            }
            let fv = cache.first_variation(&z).unwrap();
            assert!((fv - (1.0 - alpha)).abs() < 1e-14, "{fv}");
            let g = cache.wasserstein_gradient(&z).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-14));
        }
    }

    /// `A` assembled term by term with explicit loops over eigenpairs.
    fn a_by_double_loop(eig: &EigenDecomposition, n: usize) -> DMatrix<f64> {
        let total = eig.dim();
        let c = eig.eigenvectors();
        let eta: Vec<f64> = eig.retained_values().collect();
        let mut a = DMatrix::zeros(total, total);
        for j in 0..eta.len() {
            for l in 0..eta.len() {
                let mut inner = 0.0;
                for i in 0..n {
                    inner += c[(i, j)] * c[(i, l)];
                }
                let w = if j == l {
                    inner / eta[j]
                } else {
                    inner * (eta[j].ln() - eta[l].ln()) / (eta[j] - eta[l])
                };
                for r in 0..total {
                    for s in 0..total {
                        a[(r, s)] += w * c[(r, j)] * c[(s, l)];
                    }
                }
            }
        }
        a
    }

    #[test]
    fn a_matches_double_loop() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let p = DiscreteMeasure::from_rows(&[vec![0.0, 0.0], vec![0.8, 0.3]]).unwrap();
        let q = DiscreteMeasure::from_rows(&[vec![0.5, -0.4], vec![1.5, 1.0]]).unwrap();
        let cache = SpectralCache::build(&p, &q, &k, 0.3).unwrap();
        let oracle = a_by_double_loop(cache.eig_joint(), 2);
        assert!((cache.a_matrix() - oracle).amax() < 1e-12);
    }

    #[test]
    fn cached_matrices_are_symmetric() {
        let mut rng = rng_stream(31, 0);
        for _ in 0..20 {
            let n = rng.random_range(1..10);
            let m = rng.random_range(1..10);
            let p = TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0).sample_with(n, &mut rng).unwrap();
            let q = TargetSpec::isotropic_gaussian(vec![1.0, 0.5], 1.5).sample_with(m, &mut rng).unwrap();
            let k = KernelSpec::gaussian(rng.random_range(0.5..2.0)).unwrap();
            let cache = SpectralCache::build(&p, &q, &k, rng.random_range(0.05..0.95)).unwrap();
            assert!(max_asymmetry(cache.a_matrix()) <= 1e-10 * cache.a_matrix().amax().max(1.0));
            assert!(max_asymmetry(cache.g_entropy()) <= 1e-10);
            assert!(max_asymmetry(cache.g_joint_plus_a()) <= 1e-10 * cache.g_joint_plus_a().amax().max(1.0));
        }
    }

    #[test]
    fn value_matches_closed_form() {
        let k = KernelSpec::gaussian(0.9).unwrap();
        let p = TargetSpec::three_rings().sample(15, 1).unwrap();
        let q = TargetSpec::three_rings().sample(11, 2).unwrap();
        let cache = SpectralCache::build(&p, &q, &k, 0.2).unwrap();
        assert_eq!(cache.value(), kkl_alpha_unclamped(&p, &q, &k, 0.2).unwrap());
    }

    #[test]
    fn first_variation_constant_at_stationary_point() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        for n in [1, 3, 8] {
            let p = TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0).sample(n, n as u64).unwrap();
            let cache = SpectralCache::build(&p, &p, &k, 0.3).unwrap();
            let vals: Vec<f64> = (0..n).map(|i| cache.first_variation(p.point(i)).unwrap()).collect();
            for v in &vals {
                assert!((v - vals[0]).abs() < 1e-9, "{vals:?}");
            }
        }
    }

    #[test]
    fn gradient_is_translation_invariant() {
        let k = KernelSpec::gaussian(1.2).unwrap();
        let p = TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0).sample(6, 1).unwrap();
        let q = TargetSpec::isotropic_gaussian(vec![1.0, 0.0], 1.0).sample(5, 2).unwrap();
        let shift = [3.0, -2.0];
        let moved = |m: &DiscreteMeasure| {
            let pts = m.points().flat_map(|x| [x[0] + shift[0], x[1] + shift[1]]).collect();
            m.with_points(pts).unwrap()
        };
        let x = [0.3, 0.1];
        let g0 = wasserstein_gradient(&p, &q, &k, 0.4, &x).unwrap();
        let g1 = wasserstein_gradient(&moved(&p), &moved(&q), &k, 0.4, &[x[0] + shift[0], x[1] + shift[1]]).unwrap();
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn spectra_are_consistent() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let p = TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0).sample(4, 9).unwrap();
        let cache = SpectralCache::build(&p, &p, &k, 0.5).unwrap();
        // p = q: K has rank n
        assert_eq!(cache.eig_joint().retained(), 4);
        let direct = sym_eig(&(k.gram_self(&p) / 4.0)).unwrap();
        for (a, b) in cache.eig_entropy().retained_values().zip(direct.retained_values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let cache = SpectralCache::build(&delta(&[0.0, 0.0]), &delta(&[1.0, 0.0]), &k, 0.5).unwrap();
        assert!(cache.first_variation(&[0.0]).is_err());
        assert!(cache.wasserstein_gradient(&[0.0, f64::NAN]).is_err());
    }
}
