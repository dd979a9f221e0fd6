//! Experiment drivers shared by the command-line tool and the test suites:
//! concentration of the empirical divergence, the skewness bound on nested
//! supports, and particle flows between sampled clouds.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowOptions, FlowRun, Objective, OptimizerSpec};
use crate::kernel::KernelSpec;
use crate::kkl::{kkl_alpha, kkl_alpha_grid, kkl_exact_nested, max_valid_mu, skewness_bound};
use crate::measure::{rng_stream, DiscreteMeasure, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcentrationConfig {
    pub p: TargetSpec,
    pub q: TargetSpec,
    pub kernel: KernelSpec,
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

fn diagonal(values: &[f64]) -> Vec<Vec<f64>> {
    let d = values.len();
    (0..d).map(|i| (0..d).map(|j| if i == j { values[i] } else { 0.0 }).collect()).collect()
}

impl Default for ConcentrationConfig {
    /// Two anisotropic Gaussians in dimension 10 with a bandwidth-10 kernel.
    fn default() -> Self {
        let d = 10;
        let p_var: Vec<f64> = (0..d).map(|i| 0.5 + 0.15 * i as f64).collect();
        let q_var: Vec<f64> = (0..d).map(|i| 2.0 - 0.1 * i as f64).collect();
        let mut q_mean = vec![0.0; d];
        q_mean[0] = 2.0;
        q_mean[1] = -1.0;
        Self {
            p: TargetSpec::Gaussian { mean: vec![0.0; d], cov: diagonal(&p_var) },
            q: TargetSpec::Gaussian { mean: q_mean, cov: diagonal(&q_var) },
            kernel: KernelSpec::Gaussian { bandwidth: 10.0 },
            ns: vec![16, 32, 64, 128, 256, 512],
            alphas: vec![0.1, 0.5, 0.9],
            runs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub alpha: f64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Mean and sample standard deviation (`ddof = 1`, zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Samples `n` points from both distributions for every run and evaluates the
/// divergence on the α grid. Runs are independent and may execute in parallel;
/// each draws from its own `(seed, stream)` pair, so results do not depend on
/// the thread count.
pub fn concentration_study(cfg: &ConcentrationConfig) -> Result<Vec<ConcentrationRow>> {
    if cfg.runs == 0 || cfg.ns.is_empty() || cfg.alphas.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.p.dim() != cfg.q.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.p.dim(), found: cfg.q.dim() });
    }
    cfg.p.validate()?;
    cfg.q.validate()?;
    let tasks: Vec<(usize, usize)> =
        (0..cfg.ns.len()).flat_map(|i| (0..cfg.runs).map(move |r| (i, r))).collect();
    let values: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(i, r)| {
            let n = cfg.ns[i];
            let stream = 2 * (i * cfg.runs + r) as u64;
            let p = cfg.p.sample_with(n, &mut rng_stream(cfg.seed, stream))?;
            let q = cfg.q.sample_with(n, &mut rng_stream(cfg.seed, stream + 1))?;
            kkl_alpha_grid(&p, &q, &cfg.kernel, &cfg.alphas)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.ns.len() * cfg.alphas.len());
    for (i, &n) in cfg.ns.iter().enumerate() {
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            let vals: Vec<f64> = (0..cfg.runs).map(|r| values[i * cfg.runs + r][a]).collect();
            let (mean, std) = mean_std(&vals);
            rows.push(ConcentrationRow { n, alpha, mean, std, runs: cfg.runs });
        }
    }
    Ok(rows)
}

/// `q` with `m` atoms drawn from `target`, and `p` a random reweighting of
/// `subset` distinct atoms of `q`.
pub fn nested_instance(target: &TargetSpec, m: usize, subset: usize, seed: u64) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if subset == 0 || subset > m {
        return Err(Error::InvalidParameter(format!("subset size {subset} must lie in 1..={m}")));
    }
    let q = target.sample_with(m, &mut rng_stream(seed, 0))?;
    let mut rng = rng_stream(seed, 1);
    let mut idx = index::sample(&mut rng, m, subset).into_vec();
    idx.sort_unstable();
    let points: Vec<f64> = idx.iter().flat_map(|&i| q.point(i).to_vec()).collect();
    let weights: Vec<f64> = (0..subset).map(|_| rng.random_range(0.5..1.5)).collect();
    let p = DiscreteMeasure::normalized(points, q.dim(), weights)?;
    Ok((p, q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkewnessConfig {
    pub target: TargetSpec,
    pub m: usize,
    pub subset: usize,
    pub kernel: KernelSpec,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

impl Default for SkewnessConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0),
            m: 30,
            subset: 12,
            kernel: KernelSpec::Gaussian { bandwidth: 1.0 },
            alphas: vec![1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewnessRow {
    pub alpha: f64,
    pub kkl_alpha: f64,
    pub kkl_exact: f64,
    pub abs_dev: f64,
    pub bound: f64,
}

impl SkewnessRow {
    pub fn within_bound(&self) -> bool {
        self.abs_dev <= self.bound
    }
}

/// Compares the regularized divergence with the exact one on a nested
/// instance, using the largest admissible density-ratio constant.
pub fn skewness_study(cfg: &SkewnessConfig) -> Result<Vec<SkewnessRow>> {
    let (p, q) = nested_instance(&cfg.target, cfg.m, cfg.subset, cfg.seed)?;
    skewness_rows(&p, &q, &cfg.kernel, &cfg.alphas)
}

pub fn skewness_rows(p: &DiscreteMeasure, q: &DiscreteMeasure, k: &KernelSpec, alphas: &[f64]) -> Result<Vec<SkewnessRow>> {
    let exact = kkl_exact_nested(p, q, k)?;
    let mu = max_valid_mu(p, q)?;
    alphas
        .iter()
        .map(|&alpha| {
            let value = kkl_alpha(p, q, k, alpha)?;
            Ok(SkewnessRow {
                alpha,
                kkl_alpha: value,
                kkl_exact: exact,
                abs_dev: (value - exact).abs(),
                bound: skewness_bound(p, q, k, alpha, mu)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub source: TargetSpec,
    pub target: TargetSpec,
    pub n: usize,
    pub m: usize,
    pub kernel: KernelSpec,
    pub objective: Objective,
    pub optimizer: OptimizerSpec,
    pub trace_every: usize,
    pub track_metrics: bool,
    pub snapshot_every: Option<usize>,
    pub seed: u64,
}

impl Default for FlowConfig {
    /// Three rings, 100 particles started from a Gaussian blob.
    fn default() -> Self {
        Self {
            source: three_rings_source(),
            target: TargetSpec::three_rings(),
            n: 100,
            m: 100,
            kernel: KernelSpec::Gaussian { bandwidth: 0.3 },
            objective: Objective::Kkl { alpha: 0.01 },
            optimizer: OptimizerSpec::default(),
            trace_every: 1,
            track_metrics: true,
            snapshot_every: Some(25),
            seed: 0,
        }
    }
}

/// Gaussian with the mean and covariance of the default three-rings target.
pub fn three_rings_source() -> TargetSpec {
    TargetSpec::Gaussian { mean: vec![2.5, 0.0], cov: vec![vec![14.0 / 3.0, 0.0], vec![0.0, 0.5]] }
}

/// Samples target (stream 0) and source (stream 1) and runs the flow.
pub fn flow_experiment(cfg: &FlowConfig) -> Result<(DiscreteMeasure, DiscreteMeasure, FlowRun)> {
    let q = cfg.target.sample_with(cfg.m, &mut rng_stream(cfg.seed, 0))?;
    let p0 = cfg.source.sample_with(cfg.n, &mut rng_stream(cfg.seed, 1))?;
    let opts = FlowOptions {
        trace_every: cfg.trace_every,
        track_metrics: cfg.track_metrics,
        snapshot_every: cfg.snapshot_every,
    };
    let run = run_flow(&p0, &q, &cfg.kernel, cfg.objective, &cfg.optimizer, &opts)?;
    Ok((p0, q, run))
}
