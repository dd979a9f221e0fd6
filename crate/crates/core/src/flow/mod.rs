//! Particle descent on `X -> F(p_X)` for uniform clouds `p_X`.
//!
//! Plain gradient descent moves every particle along the Wasserstein velocity
//! `x_i <- x_i - gamma grad F'(x_i)`. The line-search and L-BFGS drivers work
//! with the Euclidean gradient of `F` over the flattened positions, which is
//! `w_i grad F'(x_i)` per particle.

mod lbfgs;
mod linesearch;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use lbfgs::{LbfgsMemory, CURVATURE_TOL};

use crate::error::{Error, Result};
use crate::kernel::{dot, sq_dist, KernelSpec};
use crate::kkl::{check_inputs, SpectralCache};
use crate::measure::DiscreteMeasure;
use crate::metrics::{energy_distance, wasserstein2};
use crate::mmd::{mmd_squared, witness_gradient_into};
use linesearch::{backtracking, strong_wolfe, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Objective {
    Kkl { alpha: f64 },
    Mmd,
}

impl Objective {
    pub fn label(&self) -> &'static str {
        match self {
            Objective::Kkl { .. } => "kkl",
            Objective::Mmd => "mmd",
        }
    }
}

/// Objective value and derivatives at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Euclidean gradient of `X -> F(p_X)`, row-major `n x d`.
    pub gradient: Vec<f64>,
    /// Wasserstein velocity `grad F'(x_i)`, row-major `n x d`.
    pub velocity: Vec<f64>,
}

impl Evaluation {
    pub fn gradient_norm(&self) -> f64 {
        dot(&self.gradient, &self.gradient).sqrt()
    }
}

/// Evaluates the objective at `positions` and the per-particle gradients.
pub fn evaluate(objective: Objective, positions: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec) -> Result<Evaluation> {
    let d = positions.dim();
    let (value, velocity) = match objective {
        Objective::Kkl { alpha } => {
            let cache = SpectralCache::build(positions, q, k, alpha)?;
            (cache.value(), cache.gradients_at_atoms())
        }
        Objective::Mmd => {
            let value = mmd_squared(positions, q, k)?;
            let mut velocity = vec![0.0; positions.len() * d];
            for (i, chunk) in velocity.chunks_exact_mut(d).enumerate() {
                witness_gradient_into(positions, q, k, positions.point(i), 2.0, chunk);
            }
            (value, velocity)
        }
    };
    let gradient = velocity
        .chunks_exact(d)
        .zip(positions.weights())
        .flat_map(|(v, w)| v.iter().map(move |vi| w * vi))
        .collect::<Vec<f64>>();
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("{} objective or gradient", objective.label())));
    }
    Ok(Evaluation { value, gradient, velocity })
}

/// `(value, Euclidean gradient)`; one cache build per call.
pub fn objective_and_gradient(
    objective: Objective,
    positions: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
) -> Result<(f64, Vec<f64>)> {
    let e = evaluate(objective, positions, q, k)?;
    Ok((e.value, e.gradient))
}

/// `h = (1/n) (sum_ij |x_i - y_j|^2)^{1/2} n^{-1/(d+4)}`.
pub fn step_size_heuristic(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    p.check_same_dim(q)?;
    let total: f64 = p.points().map(|x| q.points().map(|y| sq_dist(x, y)).sum::<f64>()).sum();
    let n = p.len() as f64;
    Ok(total.sqrt() / n * n.powf(-1.0 / (p.dim() as f64 + 4.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    GdLinesearch,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Fixed(f64),
    Rule(StepRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSpec {
    pub method: Method,
    pub step_size: StepSize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory_size: usize,
    pub c1: f64,
    pub c2: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Wall-clock budget; the run stops before starting an iteration past it.
    pub max_seconds: Option<f64>,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            step_size: StepSize::Rule(StepRule::Heuristic),
            max_iters: 100,
            grad_tol: 1e-7,
            memory_size: 10,
            c1: 1e-4,
            c2: 0.9,
            backtrack_factor: 0.5,
            max_halvings: 30,
            max_seconds: None,
        }
    }
}

impl OptimizerSpec {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(g) = self.step_size {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!("step size {g} must be positive")));
            }
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("grad_tol {} must be nonnegative", self.grad_tol)));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidParameter(format!("need 0 < c1 < c2 < 1, got {} and {}", self.c1, self.c2)));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter(format!("backtrack factor {} must lie in (0, 1)", self.backtrack_factor)));
        }
        if self.memory_size == 0 {
            return Err(Error::InvalidParameter("memory_size must be at least 1".into()));
        }
        if let Some(s) = self.max_seconds {
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter(format!("max_seconds {s} must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub positions: Vec<f64>,
    pub dim: usize,
    pub iteration: usize,
    pub objective_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub optimizer_memory: Option<LbfgsMemory>,
}

impl FlowState {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::uniform(self.positions.clone(), self.dim)
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial value")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GradTol,
    LineSearchFailed,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub w2: Option<f64>,
    pub energy_dist: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Trace every this many iterations (0 disables the trace). The first and
    /// last iterations are always traced when enabled.
    pub trace_every: usize,
    /// Compute W2 (when sizes match) and the energy distance in trace rows.
    pub track_metrics: bool,
    /// Keep positions every this many iterations, plus the first and last.
    pub snapshot_every: Option<usize>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { trace_every: 1, track_metrics: false, snapshot_every: None }
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub state: FlowState,
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub stop: StopReason,
    pub step_size: f64,
}

struct Recorder<'a> {
    q: &'a DiscreteMeasure,
    opts: &'a FlowOptions,
    start: Instant,
    trace: Vec<TraceRow>,
    snapshots: Vec<(usize, Vec<f64>)>,
}

impl Recorder<'_> {
    fn record(&mut self, iter: usize, positions: &DiscreteMeasure, eval: &Evaluation, force: bool) -> Result<()> {
        let every = self.opts.trace_every;
        if every > 0 && (force || iter.is_multiple_of(every)) && self.trace.last().map(|r| r.iter) != Some(iter) {
            let (w2, energy) = if self.opts.track_metrics {
                let w2 = if positions.len() == self.q.len() && self.q.is_uniform(1e-12) {
                    Some(wasserstein2(positions, self.q)?)
                } else {
                    None
                };
                (w2, Some(energy_distance(positions, self.q)?))
            } else {
                (None, None)
            };
            self.trace.push(TraceRow {
                iter,
                objective: eval.value,
                grad_norm: eval.gradient_norm(),
                w2,
                energy_dist: energy,
                seconds: self.start.elapsed().as_secs_f64(),
            });
        }
        if let Some(every) = self.opts.snapshot_every {
            let due = force || (every > 0 && iter.is_multiple_of(every));
            if due && self.snapshots.last().map(|s| s.0) != Some(iter) {
                self.snapshots.push((iter, positions.flat_points().to_vec()));
            }
        }
        Ok(())
    }
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Runs the particle flow from `p0` toward `q`.
pub fn run_flow(
    p0: &DiscreteMeasure,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    objective: Objective,
    opt: &OptimizerSpec,
    opts: &FlowOptions,
) -> Result<FlowRun> {
    opt.validate()?;
    match objective {
        Objective::Kkl { alpha } => check_inputs(p0, q, k, alpha)?,
        Objective::Mmd => {
            p0.check_same_dim(q)?;
            k.validate()?;
        }
    }
    if !p0.is_uniform(1e-12) {
        return Err(Error::InvalidWeights("flows start from uniform weights".into()));
    }
    let step = match opt.step_size {
        StepSize::Fixed(g) => g,
        StepSize::Rule(StepRule::Heuristic) => step_size_heuristic(p0, q)?,
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size {step} must be positive")));
    }

    let mut rec = Recorder { q, opts, start: Instant::now(), trace: Vec::new(), snapshots: Vec::new() };
    let mut current = p0.clone();
    let mut eval = evaluate(objective, &current, q, k)?;
    let mut state = FlowState {
        positions: current.flat_points().to_vec(),
        dim: p0.dim(),
        iteration: 0,
        objective_history: vec![eval.value],
        gradient_norm_history: vec![eval.gradient_norm()],
        optimizer_memory: (opt.method == Method::Lbfgs).then(|| LbfgsMemory::new(opt.memory_size)),
    };
    rec.record(0, &current, &eval, true)?;

    let at = |x: Vec<f64>| p0.with_points(x);
    let stop = loop {
        if eval.gradient_norm() <= opt.grad_tol {
            break StopReason::GradTol;
        }
        if state.iteration >= opt.max_iters {
            break StopReason::MaxIters;
        }
        if let Some(limit) = opt.max_seconds {
            if rec.start.elapsed().as_secs_f64() >= limit {
                break StopReason::TimeBudget;
            }
        }

        let x = current.flat_points();
        let next = match opt.method {
            Method::Gd => {
                let moved = at(axpy(x, -step, &eval.velocity))?;
                let e = evaluate(objective, &moved, q, k)?;
                Some((moved, e))
            }
            Method::GdLinesearch => {
                let dir: Vec<f64> = eval.velocity.iter().map(|v| -v).collect();
                let slope0 = dot(&eval.gradient, &dir);
                let phi = |t: f64| trial(objective, &at, q, k, x, t, &dir);
                backtracking(phi, eval.value, slope0, step, opt.c1, opt.backtrack_factor, opt.max_halvings)?
                    .and_then(|acc| acc.trial.payload)
            }
            Method::Lbfgs => {
                let memory = state.optimizer_memory.as_mut().expect("lbfgs memory");
                lbfgs_step(objective, &at, q, k, x, &eval, memory, step, opt)?
            }
        };
        let Some((moved, e)) = next else {
            break StopReason::LineSearchFailed;
        };
        current = moved;
        eval = e;
        state.iteration += 1;
        state.objective_history.push(eval.value);
        state.gradient_norm_history.push(eval.gradient_norm());
        rec.record(state.iteration, &current, &eval, false)?;
    };
    state.positions = current.flat_points().to_vec();
    rec.record(state.iteration, &current, &eval, true)?;
    Ok(FlowRun { state, trace: rec.trace, snapshots: rec.snapshots, stop, step_size: step })
}

type Payload = Option<(DiscreteMeasure, Evaluation)>;

fn trial<F>(objective: Objective, at: &F, q: &DiscreteMeasure, k: &KernelSpec, x: &[f64], t: f64, dir: &[f64]) -> Result<Trial<Payload>>
where
    F: Fn(Vec<f64>) -> Result<DiscreteMeasure>,
{
    let moved = at(axpy(x, t, dir));
    let moved = match moved {
        Ok(m) => m,
        Err(Error::NonFinite(_)) | Err(Error::InvalidParameter(_)) => {
            return Ok(Trial { value: f64::NAN, slope: f64::NAN, payload: None })
        }
        Err(e) => return Err(e),
    };
    match evaluate(objective, &moved, q, k) {
        Ok(e) => Ok(Trial { value: e.value, slope: dot(&e.gradient, dir), payload: Some((moved, e)) }),
        Err(Error::NonFinite(_)) => Ok(Trial { value: f64::NAN, slope: f64::NAN, payload: None }),
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn lbfgs_step<F>(
    objective: Objective,
    at: &F,
    q: &DiscreteMeasure,
    k: &KernelSpec,
    x: &[f64],
    eval: &Evaluation,
    memory: &mut LbfgsMemory,
    step: f64,
    opt: &OptimizerSpec,
) -> Result<Payload>
where
    F: Fn(Vec<f64>) -> Result<DiscreteMeasure>,
{
    for _ in 0..2 {
        // Without curvature pairs, start from the gd step `-step * velocity`.
        let (dir, t0) = if memory.is_empty() {
            (eval.velocity.iter().map(|v| -step * v).collect::<Vec<f64>>(), 1.0)
        } else {
            (memory.direction(&eval.gradient), 1.0)
        };
        let slope0 = dot(&eval.gradient, &dir);
        if !(slope0 < 0.0) {
            if memory.is_empty() {
                return Ok(None);
            }
            memory.clear();
            continue;
        }
        let phi = |t: f64| trial(objective, at, q, k, x, t, &dir);
        let accepted = strong_wolfe(phi, eval.value, slope0, t0, opt.c1, opt.c2, 2 * opt.max_halvings)?;
        match accepted.and_then(|a| a.trial.payload) {
            Some((moved, e)) => {
                let s: Vec<f64> = moved.flat_points().iter().zip(x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = e.gradient.iter().zip(&eval.gradient).map(|(a, b)| a - b).collect();
                memory.push(s, y);
                return Ok(Some((moved, e)));
            }
            None if !memory.is_empty() => memory.clear(),
            None => break,
        }
    }
    // Last resort: Armijo backtracking along the gd direction.
    let dir: Vec<f64> = eval.velocity.iter().map(|v| -v).collect();
    let slope0 = dot(&eval.gradient, &dir);
    let phi = |t: f64| trial(objective, at, q, k, x, t, &dir);
    Ok(backtracking(phi, eval.value, slope0, step, opt.c1, opt.backtrack_factor, opt.max_halvings)?
        .and_then(|acc| acc.trial.payload))
}
