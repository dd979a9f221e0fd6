//! Squared maximum mean discrepancy (biased V-statistic) and the gradient of
//! its witness function, the baseline particle flow.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::DiscreteMeasure;

fn weighted_sum(a: &DiscreteMeasure, b: &DiscreteMeasure, k: &KernelSpec) -> f64 {
    let mut total = 0.0;
    for (x, w) in a.points().zip(a.weights()) {
        let mut row = 0.0;
        for (y, v) in b.points().zip(b.weights()) {
            row += v * k.eval(x, y);
        }
        total += w * row;
    }
    total
}

/// `|m_p - m_q|^2` in the RKHS, clamped at zero.
pub fn mmd_squared(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec) -> Result<f64> {
    p.check_same_dim(q)?;
    k.validate()?;
    let pp = weighted_sum(p, p, k);
    let qq = weighted_sum(q, q, k);
    // symmetric in (p, q): average both cross orders
    let pq = 0.5 * (weighted_sum(p, q, k) + weighted_sum(q, p, k));
    Ok((pp + qq - 2.0 * pq).max(0.0))
}

/// Witness `f(x) = sum_i w_i k(x, x_i) - sum_j v_j k(x, y_j)`.
pub fn mmd_witness(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, x: &[f64]) -> Result<f64> {
    p.check_same_dim(q)?;
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: x.len() });
    }
    let a: f64 = p.points().zip(p.weights()).map(|(xi, w)| w * k.eval(x, xi)).sum();
    let b: f64 = q.points().zip(q.weights()).map(|(yj, v)| v * k.eval(x, yj)).sum();
    Ok(a - b)
}

/// Gradient of the witness at `x`.
pub fn mmd_witness_gradient(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    p.check_same_dim(q)?;
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: x.len() });
    }
    let mut g = vec![0.0; x.len()];
    witness_gradient_into(p, q, k, x, 1.0, &mut g);
    Ok(g)
}

pub(crate) fn witness_gradient_into(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    x: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    for (xi, w) in p.points().zip(p.weights()) {
        k.grad1_into(x, xi, scale * w, out);
    }
    for (yj, v) in q.points().zip(q.weights()) {
        k.grad1_into(x, yj, -scale * v, out);
    }
}
