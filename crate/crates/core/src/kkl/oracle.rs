//! Feature-space evaluation for polynomial kernels.
//!
//! `(c + x.y)^deg` has the explicit monomial feature map
//! `phi_a(x) = sqrt(multinomial(deg; a) c^{a_0}) prod_k x_k^{a_k}` over
//! exponent vectors `a = (a_0, a_1, ..., a_d)` with `|a| = deg`, so covariance
//! operators become ordinary `D x D` matrices and the divergence can be
//! computed directly, without any Gram-matrix identity.

use nalgebra::DMatrix;

use super::check_inputs;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;
use crate::spectral::{sym_eig, SpectralFn};

pub const MAX_FEATURE_DIM: usize = 200;

/// `C(d + degree, degree)`.
pub fn polynomial_feature_dim(d: usize, degree: u32) -> usize {
    let mut num: u128 = 1;
    for i in 0..degree as u128 {
        num = num * (d as u128 + degree as u128 - i) / (i + 1);
    }
    num.min(usize::MAX as u128) as usize
}

fn exponents(parts: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(parts: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in 0..=total {
            prefix.push(a);
            rec(parts - 1, total - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Explicit features of `x` for `(offset + x.y)^degree`.
pub fn polynomial_features(x: &[f64], degree: u32, offset: f64) -> Vec<f64> {
    let d = x.len();
    let dim = polynomial_feature_dim(d, degree);
    let mut out = Vec::with_capacity(dim);
    for a in exponents(d + 1, degree) {
        let coef = factorial(degree) / a.iter().map(|&e| factorial(e)).product::<f64>();
        let mut v = (coef * offset.powi(a[0] as i32)).sqrt();
        for (xk, &e) in x.iter().zip(&a[1..]) {
            v *= xk.powi(e as i32);
        }
        out.push(v);
    }
    out
}

fn polynomial_params(k: &KernelSpec, d: usize) -> Result<(u32, f64)> {
    match *k {
        KernelSpec::Polynomial { degree, offset } => {
            let dim = polynomial_feature_dim(d, degree);
            if dim > MAX_FEATURE_DIM {
                return Err(Error::FeatureDimensionOverflow(dim, MAX_FEATURE_DIM));
            }
            Ok((degree, offset))
        }
        KernelSpec::Gaussian { .. } => {
            Err(Error::InvalidParameter("feature-space evaluation needs a polynomial kernel".into()))
        }
    }
}

/// `Sigma_p = sum_i w_i phi(x_i) phi(x_i)^T` as a dense matrix.
pub fn covariance_operator(p: &DiscreteMeasure, k: &KernelSpec) -> Result<DMatrix<f64>> {
    let (degree, offset) = polynomial_params(k, p.dim())?;
    let dim = polynomial_feature_dim(p.dim(), degree);
    let mut sigma = DMatrix::zeros(dim, dim);
    for (x, w) in p.points().zip(p.weights()) {
        let phi = nalgebra::DVector::from_vec(polynomial_features(x, degree, offset));
        sigma.ger(*w, &phi, &phi, 1.0);
    }
    Ok(sigma)
}

/// `Tr(Sigma_p log Sigma_p) - Tr(Sigma_p log((1 - alpha) Sigma_q + alpha Sigma_p))`
/// with explicit covariance matrices.
pub fn kkl_alpha_oracle(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64) -> Result<f64> {
    check_inputs(p, q, k, alpha)?;
    let sp = covariance_operator(p, k)?;
    let sq = covariance_operator(q, k)?;
    let mixed = &sp * alpha + &sq * (1.0 - alpha);
    let entropy = sym_eig(&sp)?.entropy_trace();
    let log_mixed = sym_eig(&mixed)?.apply(SpectralFn::Log);
    let cross = (&sp * log_mixed).trace();
    Ok(entropy - cross)
}
