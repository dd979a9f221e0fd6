//! Distances used to track flows: exact 2-Wasserstein between equal-size
//! uniform clouds and the energy distance.

use crate::error::{Error, Result};
use crate::kernel::sq_dist;
use crate::measure::DiscreteMeasure;

/// Minimum-cost perfect matching on a square cost matrix (row-major).
/// Returns `assignment[row] = column`.
pub fn assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, found: cost.len() });
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("assignment cost {c}")));
    }
    // Shortest augmenting paths with potentials; index 0 is a sentinel.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[matched[j] - 1] = j - 1;
    }
    Ok(out)
}

fn sq_cost(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Vec<f64> {
    let mut cost = Vec::with_capacity(p.len() * q.len());
    for x in p.points() {
        for y in q.points() {
            cost.push(sq_dist(x, y));
        }
    }
    cost
}

/// Exact 2-Wasserstein distance between two uniform clouds of equal size.
pub fn wasserstein2(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    p.check_same_dim(q)?;
    if p.len() != q.len() {
        return Err(Error::UnequalSizes(p.len(), q.len()));
    }
    if !p.is_uniform(1e-12) || !q.is_uniform(1e-12) {
        return Err(Error::InvalidWeights("wasserstein2 needs uniform weights".into()));
    }
    let n = p.len();
    let cost = sq_cost(p, q);
    let perm = assignment(&cost, n)?;
    Ok((matched_total(&cost, &perm, n) / n as f64).sqrt())
}

// Summed in sorted order so the result does not depend on which side is `p`.
fn matched_total(cost: &[f64], perm: &[usize], n: usize) -> f64 {
    let mut terms: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn mean_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let mut total = 0.0;
    for (x, w) in a.points().zip(a.weights()) {
        let row: f64 = b.points().zip(b.weights()).map(|(y, v)| v * sq_dist(x, y).sqrt()).sum();
        total += w * row;
    }
    total
}

/// `2 E|X - Y| - E|X - X'| - E|Y - Y'|` (V-statistic), clamped at zero.
pub fn energy_distance(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    p.check_same_dim(q)?;
    let cross = 0.5 * (mean_distance(p, q) + mean_distance(q, p));
    Ok((2.0 * cross - (mean_distance(p, p) + mean_distance(q, q))).max(0.0))
}
