//! Unregularized KKL when every atom of `p` is an atom of `q`, and the
//! deviation bound between the regularized and unregularized values.

use nalgebra::DMatrix;

use super::{clamp_zero, weighted_gram, KklOptions};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;
use crate::spectral::sym_eig_with;

/// Relative tolerance of the projected-mass check.
pub const LEAKAGE_TOL: f64 = 1e-6;

/// `Tr(Sigma_p log Sigma_q)`, computed in the eigenbasis of
/// `M_q = V^{1/2} K_q V^{1/2}`.
///
/// With `r_ti = sum_j sqrt(v_j) u_t[j] k(y_j, x_i)` the trace is
/// `sum_t (log gamma_t / gamma_t) sum_i w_i r_ti^2`. The same sum with
/// `1 / gamma_t` must recover `sum_i w_i k(x_i, x_i)`; otherwise part of
/// `Sigma_p` lies outside the range of `Sigma_q` and the divergence is infinite.
pub fn cross_trace_nested(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec) -> Result<f64> {
    cross_trace_with(p, q, k, &KklOptions::default())
}

fn cross_trace_with(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, opts: &KklOptions) -> Result<f64> {
    p.check_same_dim(q)?;
    k.validate()?;
    let eig = sym_eig_with(&weighted_gram(q, k), opts.eig)?;
    let u = eig.retained_vectors();
    let mut kqp = k.gram(q, p)?;
    for (j, v) in q.weights().iter().enumerate() {
        kqp.row_mut(j).scale_mut(v.sqrt());
    }
    let r: DMatrix<f64> = u.transpose() * kqp;

    let mut cross = 0.0;
    let mut projected = 0.0;
    for (t, gamma) in eig.retained_values().enumerate() {
        let mass: f64 = p.weights().iter().enumerate().map(|(i, w)| w * r[(t, i)] * r[(t, i)]).sum();
        cross += gamma.ln() / gamma * mass;
        projected += mass / gamma;
    }
    let expected: f64 = p.points().zip(p.weights()).map(|(x, w)| w * k.eval(x, x)).sum();
    if (projected - expected).abs() > LEAKAGE_TOL * expected.abs().max(1.0) {
        return Err(Error::SupportLeakage { projected, expected });
    }
    Ok(cross)
}

/// `KKL(p || q) = Tr(Sigma_p log Sigma_p) - Tr(Sigma_p log Sigma_q)` for nested supports.
pub fn kkl_exact_nested(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec) -> Result<f64> {
    let opts = KklOptions::default();
    let cross = cross_trace_with(p, q, k, &opts)?;
    let entropy = sym_eig_with(&weighted_gram(p, k), opts.eig)?.entropy_trace();
    Ok(clamp_zero(entropy - cross))
}

/// `alpha (1 + 1/mu) + alpha^2 / (1 - alpha) (1 + 1/mu^2)`.
pub fn skewness_coefficient(alpha: f64, mu: f64) -> f64 {
    alpha * (1.0 + 1.0 / mu) + alpha * alpha / (1.0 - alpha) * (1.0 + 1.0 / (mu * mu))
}

/// Matches each atom of `p` to the atom of `q` at the same location and
/// returns the aggregated `(p mass, q mass)` per matched location.
fn matched_masses(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<Vec<(f64, f64)>> {
    p.check_same_dim(q)?;
    let mut out: Vec<(usize, f64, f64)> = Vec::new();
    for (x, w) in p.points().zip(p.weights()) {
        if *w == 0.0 {
            continue;
        }
        let j = q
            .points()
            .position(|y| y == x)
            .ok_or_else(|| Error::InvalidParameter(format!("atom {x:?} of p is not an atom of q")))?;
        match out.iter_mut().find(|(jj, _, _)| *jj == j) {
            Some(entry) => entry.1 += w,
            None => {
                let v: f64 = q.points().zip(q.weights()).filter(|(y, _)| *y == x).map(|(_, v)| v).sum();
                out.push((j, *w, v));
            }
        }
    }
    Ok(out.into_iter().map(|(_, w, v)| (w, v)).collect())
}

/// Largest `mu <= 1` with `dp/dq <= 1/mu` on the atoms.
pub fn max_valid_mu(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let pairs = matched_masses(p, q)?;
    Ok(pairs.iter().map(|(w, v)| v / w).fold(1.0, f64::min))
}

/// Upper bound on `|KKL_alpha(p || q) - KKL(p || q)|` given a density-ratio
/// bound `dp/dq <= 1/mu`.
pub fn skewness_bound(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alpha: f64, mu: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in [0, 1)")));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParameter(format!("mu = {mu} must lie in (0, 1]")));
    }
    let limit = max_valid_mu(p, q)?;
    if mu > limit * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} exceeds the largest value {limit} allowed by the weight ratios"
        )));
    }
    let cross = cross_trace_nested(p, q, k)?;
    Ok(skewness_coefficient(alpha, mu) * cross.abs())
}
