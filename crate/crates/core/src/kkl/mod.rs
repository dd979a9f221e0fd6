//! Regularized kernel Kullback-Leibler divergence between discrete measures.
//!
//! For `p = sum_i w_i delta_{x_i}` and `q = sum_j v_j delta_{y_j}` the
//! covariance operators factor through the stacked feature matrix `psi` whose
//! rows are `sqrt(alpha w_i) phi(x_i)` followed by `sqrt((1 - alpha) v_j) phi(y_j)`.
//! Then `psi^T psi = alpha Sigma_p + (1 - alpha) Sigma_q` and `psi psi^T` is the
//! joint Gram matrix `K`, so
//!
//! ```text
//! KKL_alpha(p || q) = Tr(M_p log M_p) - (1/alpha) sum_j eta_j log eta_j |a_j|^2
//! ```
//!
//! with `M_p = W^{1/2} K_p W^{1/2}`, `(eta_j, c_j)` the eigenpairs of `K`, and
//! `a_j` the first `n` entries of `c_j`. Uniform weights give the usual
//! `(alpha/n) K_p`, `sqrt(alpha (1 - alpha) / nm) K_pq`, `((1 - alpha)/m) K_q` blocks.

mod cache;
mod nested;
mod oracle;

pub use cache::{first_variation, wasserstein_gradient, SpectralCache};
pub use nested::{cross_trace_nested, kkl_exact_nested, max_valid_mu, skewness_bound, skewness_coefficient};
pub use oracle::{covariance_operator, kkl_alpha_oracle, polynomial_feature_dim, polynomial_features, MAX_FEATURE_DIM};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;
use crate::spectral::{sym_eig_with, xlogx, EigOptions, EigenDecomposition, DEFAULT_DEGENERACY_TOL};

/// Divergence values with `|v| <= ZERO_CLAMP` are reported as exactly zero.
pub const ZERO_CLAMP: f64 = 1e-9;

/// Numerical knobs shared by the divergence and first-variation routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KklOptions {
    pub eig: EigOptions,
    /// Relative gap under which two eigenvalues use the analytic divided
    /// difference `2 / (a + b)`.
    pub degeneracy_tol: f64,
    /// Off-diagonal pairs with `|<a_j, a_k>|` at or below this are left out of `A`.
    pub cross_skip_tol: f64,
}

impl Default for KklOptions {
    fn default() -> Self {
        Self { eig: EigOptions::default(), degeneracy_tol: DEFAULT_DEGENERACY_TOL, cross_skip_tol: 1e-14 }
    }
}

/// The joint Gram matrix `K = psi psi^T` of size `(n + m) x (n + m)`.
#[derive(Debug, Clone)]
pub struct JointGram {
    matrix: DMatrix<f64>,
    alpha: f64,
    n: usize,
    m: usize,
}

impl JointGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Diagonal of `I_alpha`: `1/alpha` on the first `n` entries, zero after.
    pub fn i_alpha_diag(&self) -> Vec<f64> {
        (0..self.n + self.m).map(|i| if i < self.n { 1.0 / self.alpha } else { 0.0 }).collect()
    }
}

pub(crate) fn check_inputs(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    p.check_same_dim(q)?;
    k.validate()
}

/// Row scales of `psi`: `sqrt(alpha w_i)` then `sqrt((1 - alpha) v_j)`.
pub(crate) fn factor_scales(p: &DiscreteMeasure, q: &DiscreteMeasure, alpha: f64) -> Vec<f64> {
    p.weights()
        .iter()
        .map(|w| (alpha * w).sqrt())
        .chain(q.weights().iter().map(|v| ((1.0 - alpha) * v).sqrt()))
        .collect()
}

/// Atom `l` of the concatenated support `(x_1..x_n, y_1..y_m)`.
#[inline]
pub(crate) fn joint_point<'a>(p: &'a DiscreteMeasure, q: &'a DiscreteMeasure, l: usize) -> &'a [f64] {
    if l < p.len() {
        p.point(l)
    } else {
        q.point(l - p.len())
    }
}

pub fn build_joint_gram(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<JointGram> {
    check_inputs(p, q, k, alpha)?;
    let s = factor_scales(p, q, alpha);
    let total = s.len();
    let mut matrix = DMatrix::zeros(total, total);
    for a in 0..total {
        let za = joint_point(p, q, a);
        for b in 0..=a {
            let v = s[a] * s[b] * k.eval(za, joint_point(p, q, b));
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    Ok(JointGram { matrix, alpha, n: p.len(), m: q.len() })
}

/// `W^{1/2} K_p W^{1/2}`, whose nonzero spectrum is that of `Sigma_p`.
pub(crate) fn weighted_gram(p: &DiscreteMeasure, k: &KernelSpec) -> DMatrix<f64> {
    let sw: Vec<f64> = p.weights().iter().map(|w| w.sqrt()).collect();
    let mut g = k.gram_self(p);
    for i in 0..p.len() {
        for j in 0..p.len() {
            g[(i, j)] *= sw[i] * sw[j];
        }
    }
    g
}

/// `sum_j eta_j log eta_j |a_j|^2 / alpha`, which equals `Tr(I_alpha K log K)`.
pub(crate) fn cross_term(eig: &EigenDecomposition, n: usize, alpha: f64) -> f64 {
    let c = eig.eigenvectors();
    eig.retained_values()
        .enumerate()
        .map(|(j, eta)| {
            let a2: f64 = c.column(j).rows(0, n).norm_squared();
            xlogx(eta) * a2
        })
        .sum::<f64>()
        / alpha
}

/// Closed form without the zero clamp. Entropy and cross terms are returned
/// separately.
pub(crate) fn kkl_alpha_terms(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    alpha: f64,
    opts: &KklOptions,
) -> Result<(f64, f64)> {
    let joint = build_joint_gram(p, q, k, alpha)?;
    let entropy = sym_eig_with(&weighted_gram(p, k), opts.eig)?.entropy_trace();
    let eig = sym_eig_with(joint.matrix(), opts.eig)?;
    Ok((entropy, cross_term(&eig, p.len(), alpha)))
}

pub(crate) fn clamp_zero(v: f64) -> f64 {
    if v.abs() <= ZERO_CLAMP {
        0.0
    } else {
        v
    }
}

/// `KKL_alpha(p || q) = KKL(p || (1 - alpha) q + alpha p)` in closed form.
pub fn kkl_alpha(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<f64> {
    kkl_alpha_with(p, q, k, alpha, &KklOptions::default())
}

pub fn kkl_alpha_with(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    alpha: f64,
    opts: &KklOptions,
) -> Result<f64> {
    let (entropy, cross) = kkl_alpha_terms(p, q, k, alpha, opts)?;
    Ok(clamp_zero(entropy - cross))
}

/// Same as [`kkl_alpha`] without snapping small values to zero; used where
/// differences of nearby evaluations matter.
pub fn kkl_alpha_unclamped(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<f64> {
    let (entropy, cross) = kkl_alpha_terms(p, q, k, alpha, &KklOptions::default())?;
    Ok(entropy - cross)
}

/// Evaluates several `alpha` values, sharing the entropy eigendecomposition.
pub fn kkl_alpha_grid(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Ok(Vec::new());
    }
    check_inputs(p, q, k, alphas[0])?;
    let opts = KklOptions::default();
    let entropy = sym_eig_with(&weighted_gram(p, k), opts.eig)?.entropy_trace();
    alphas
        .iter()
        .map(|&alpha| {
            let joint = build_joint_gram(p, q, k, alpha)?;
            let eig = sym_eig_with(joint.matrix(), opts.eig)?;
            Ok(clamp_zero(entropy - cross_term(&eig, p.len(), alpha)))
        })
        .collect()
}
