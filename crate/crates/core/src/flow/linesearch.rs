//! Line searches along a fixed direction `d` from the current point.
//!
//! Both searches work on `phi(t) = f(x + t d)` through a closure returning the
//! trial value, its directional derivative, and a payload kept for the
//! accepted point. Non-finite trial values count as failed trials.

use crate::error::Result;

pub(crate) struct Trial<T> {
    pub value: f64,
    pub slope: f64,
    pub payload: T,
}

pub(crate) struct Accepted<T> {
    #[allow(dead_code)]
    pub step: f64,
    pub trial: Trial<T>,
}

/// Armijo backtracking: `phi(t) <= phi(0) + c1 t phi'(0)`, shrinking `t` by
/// `factor` at most `max_halvings` times.
pub(crate) fn backtracking<T, F>(
    mut phi: F,
    f0: f64,
    slope0: f64,
    mut t: f64,
    c1: f64,
    factor: f64,
    max_halvings: usize,
) -> Result<Option<Accepted<T>>>
where
    F: FnMut(f64) -> Result<Trial<T>>,
{
    for _ in 0..=max_halvings {
        let trial = phi(t)?;
        if trial.value.is_finite() && trial.value <= f0 + c1 * t * slope0 {
            return Ok(Some(Accepted { step: t, trial }));
        }
        t *= factor;
    }
    Ok(None)
}

fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
}

/// Strong-Wolfe search (bracketing then zoom). Returns the first trial that
/// satisfies both conditions within `max_evals` evaluations, else `None`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn strong_wolfe<T, F>(
    mut phi: F,
    f0: f64,
    slope0: f64,
    t_init: f64,
    c1: f64,
    c2: f64,
    max_evals: usize,
) -> Result<Option<Accepted<T>>>
where
    F: FnMut(f64) -> Result<Trial<T>>,
{
    let armijo = |t: f64, f: f64| f.is_finite() && f <= f0 + c1 * t * slope0;
    let curvature = |s: f64| s.abs() <= -c2 * slope0;

    let mut evals = 0;
    let (mut t_prev, mut f_prev, mut s_prev) = (0.0, f0, slope0);
    let mut t = t_init;
    // bracket [lo, hi] with lo the best Armijo point
    let (mut lo, mut flo, mut slo, mut hi, mut fhi, mut shi);
    loop {
        if evals >= max_evals {
            return Ok(None);
        }
        let trial = phi(t)?;
        evals += 1;
        let finite = trial.value.is_finite() && trial.slope.is_finite();
        if !finite || !armijo(t, trial.value) || (evals > 1 && trial.value >= f_prev) {
            lo = t_prev;
            flo = f_prev;
            slo = s_prev;
            hi = t;
            fhi = if finite { trial.value } else { f64::INFINITY };
            shi = if finite { trial.slope } else { f64::NAN };
            break;
        }
        if curvature(trial.slope) {
            return Ok(Some(Accepted { step: t, trial }));
        }
        if trial.slope >= 0.0 {
            lo = t;
            flo = trial.value;
            slo = trial.slope;
            hi = t_prev;
            fhi = f_prev;
            shi = s_prev;
            break;
        }
        t_prev = t;
        f_prev = trial.value;
        s_prev = trial.slope;
        t *= 2.0;
    }

    while evals < max_evals {
        let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let width = b - a;
        let mut t = if fhi.is_finite() && shi.is_finite() { cubic_min(lo, flo, slo, hi, fhi, shi) } else { f64::NAN };
        if !(t > a + 0.1 * width && t < b - 0.1 * width) {
            t = 0.5 * (a + b);
        }
        let trial = phi(t)?;
        evals += 1;
        let finite = trial.value.is_finite() && trial.slope.is_finite();
        if !finite || !armijo(t, trial.value) || trial.value >= flo {
            hi = t;
            fhi = if finite { trial.value } else { f64::INFINITY };
            shi = if finite { trial.slope } else { f64::NAN };
            continue;
        }
        if curvature(trial.slope) {
            return Ok(Some(Accepted { step: t, trial }));
        }
        if trial.slope * (hi - lo) >= 0.0 {
            hi = lo;
            fhi = flo;
            shi = slo;
        }
        lo = t;
        flo = trial.value;
        slo = trial.slope;
    }
    Ok(None)
}
