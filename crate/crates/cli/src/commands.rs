use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kklflow::flow::{Method, Objective};
use kklflow::measure::rng_stream;
use kklflow::study::{
    concentration_study, flow_experiment, skewness_study, ConcentrationConfig, ConcentrationRow, FlowConfig,
    SkewnessConfig, SkewnessRow,
};
use kklflow::{kkl_alpha, mmd_squared, DiscreteMeasure, KernelSpec, TargetSpec};
use serde::{Deserialize, Serialize};

use crate::config::{effective, GlobalSettings};
use crate::error::{CliError, Result};
use crate::svg::{self, Layer, Scale, Series, PALETTE};

/// What a command produced.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    /// Violated in-config assertions. Nonempty means a nonzero exit code.
    pub failures: Vec<String>,
}

pub struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        Ok(Output { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name)?;
        fs::write(&p, body).map_err(CliError::io(&p))
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name)?;
        let file = fs::File::create(&p).map_err(CliError::io(&p))?;
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(CliError::io(&p))
    }

    fn cloud(&mut self, name: &str, m: &DiscreteMeasure) -> Result<()> {
        let p = self.path(name)?;
        m.save(&p).map_err(CliError::from)
    }

    fn finish(self, summary: Vec<String>, failures: Vec<String>) -> Report {
        Report { files: self.files, summary, failures }
    }
}

fn pairs(m: &DiscreteMeasure) -> Vec<(f64, f64)> {
    m.points().map(|x| (x[0], x.get(1).copied().unwrap_or(0.0))).collect()
}

// ---------------------------------------------------------------- divergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSource {
    pub spec: TargetSpec,
    pub n: usize,
}

/// A point cloud read from disk or sampled from a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CloudSource {
    File(FileSource),
    Sample(SampleSource),
}

impl CloudSource {
    fn resolve(&self, base: &Path, seed: u64, stream: u64) -> Result<DiscreteMeasure> {
        match self {
            CloudSource::File(f) => {
                let path = base.join(&f.path);
                DiscreteMeasure::load(&path).map_err(|e| CliError::Config { path, msg: e.to_string() })
            }
            CloudSource::Sample(s) => Ok(s.spec.sample_with(s.n, &mut rng_stream(seed, stream))?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivergenceConfig {
    pub p: CloudSource,
    pub q: CloudSource,
    pub kernel: KernelSpec,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            p: CloudSource::Sample(SampleSource { spec: TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0), n: 100 }),
            q: CloudSource::Sample(SampleSource { spec: TargetSpec::isotropic_gaussian(vec![1.0, 0.0], 1.0), n: 100 }),
            kernel: KernelSpec::Gaussian { bandwidth: 1.0 },
            alphas: vec![0.1, 0.5, 0.9],
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct DivergenceRow {
    alpha: f64,
    kkl_alpha: f64,
    mmd_squared: f64,
}

#[derive(Debug, Serialize)]
struct TimingRow {
    alpha: f64,
    kkl_seconds: f64,
    mmd_seconds: f64,
}

pub fn divergence(cfg: &DivergenceConfig, global: &GlobalSettings, mut out: Output) -> Result<Report> {
    let p = cfg.p.resolve(&global.base_dir, cfg.seed, 0)?;
    let q = cfg.q.resolve(&global.base_dir, cfg.seed, 1)?;
    let t = Instant::now();
    let mmd = mmd_squared(&p, &q, &cfg.kernel)?;
    let mmd_seconds = t.elapsed().as_secs_f64();

    let mut rows = Vec::with_capacity(cfg.alphas.len());
    let mut timings = Vec::with_capacity(cfg.alphas.len());
    for &alpha in &cfg.alphas {
        let t = Instant::now();
        let kkl = kkl_alpha(&p, &q, &cfg.kernel, alpha)?;
        timings.push(TimingRow { alpha, kkl_seconds: t.elapsed().as_secs_f64(), mmd_seconds });
        rows.push(DivergenceRow { alpha, kkl_alpha: kkl, mmd_squared: mmd });
    }
    out.csv("divergence.csv", &rows)?;
    out.csv("divergence_timings.csv", &timings)?;
    out.text("config.json", &effective(cfg, global))?;
    let summary = rows.iter().map(|r| format!("alpha={} kkl_alpha={:.6e} mmd_squared={:.6e}", r.alpha, r.kkl_alpha, r.mmd_squared)).collect();
    Ok(out.finish(summary, Vec::new()))
}

// ------------------------------------------------------------- concentration

fn alpha_series(rows: &[ConcentrationRow], alphas: &[f64], value: impl Fn(&ConcentrationRow) -> f64) -> Vec<Series> {
    alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| Series {
            label: format!("alpha = {a}"),
            color: PALETTE[i % PALETTE.len()].into(),
            points: rows.iter().filter(|r| r.alpha == a).map(|r| (r.n as f64, value(r))).collect(),
        })
        .collect()
}

pub fn concentration(cfg: &ConcentrationConfig, global: &GlobalSettings, mut out: Output) -> Result<Report> {
    let rows = concentration_study(cfg)?;
    out.csv("concentration.csv", &rows)?;
    let mean = svg::line_chart(
        "Empirical KKL_alpha, mean over runs",
        "n",
        "mean",
        &alpha_series(&rows, &cfg.alphas, |r| r.mean),
        Scale::Log,
        Scale::Log,
    );
    out.text("concentration_mean.svg", &mean)?;
    let std = svg::line_chart(
        "Empirical KKL_alpha, standard deviation over runs",
        "n",
        "std",
        &alpha_series(&rows, &cfg.alphas, |r| r.std),
        Scale::Log,
        Scale::Log,
    );
    out.text("concentration_std.svg", &std)?;
    out.text("config.json", &effective(cfg, global))?;
    let summary = rows.iter().map(|r| format!("n={} alpha={} mean={:.6e} std={:.6e}", r.n, r.alpha, r.mean, r.std)).collect();
    Ok(out.finish(summary, Vec::new()))
}

// ------------------------------------------------------------------ skewness

fn skewness_line(r: &SkewnessRow) -> String {
    format!(
        "alpha={} kkl_alpha={:.6e} kkl_exact={:.6e} abs_dev={:.3e} bound={:.3e}",
        r.alpha, r.kkl_alpha, r.kkl_exact, r.abs_dev, r.bound
    )
}

/// One message per row whose deviation exceeds its bound.
pub fn bound_failures(rows: &[SkewnessRow]) -> Vec<String> {
    rows.iter().filter(|r| !r.within_bound()).map(|r| format!("deviation exceeds bound: {}", skewness_line(r))).collect()
}

pub fn skewness(cfg: &SkewnessConfig, global: &GlobalSettings, mut out: Output) -> Result<Report> {
    let rows = skewness_study(cfg)?;
    out.csv("skewness.csv", &rows)?;
    out.text("config.json", &effective(cfg, global))?;
    let summary = rows.iter().map(skewness_line).collect();
    Ok(out.finish(summary, bound_failures(&rows)))
}

// ---------------------------------------------------------------------- flow

pub fn flow(cfg: &FlowConfig, global: &GlobalSettings, mut out: Output) -> Result<Report> {
    let (p0, q, run) = flow_experiment(cfg)?;
    let dim = p0.dim();
    out.csv("trace.csv", &run.trace)?;
    out.cloud("source.csv", &p0)?;
    out.cloud("target.csv", &q)?;
    for (iter, positions) in &run.snapshots {
        let m = DiscreteMeasure::uniform(positions.clone(), dim)?;
        out.cloud(&format!("snapshots/iter_{iter:05}.csv"), &m)?;
    }
    let last = run.state.measure()?;
    out.cloud("final.csv", &last)?;

    let label = cfg.objective.label();
    let overlay = svg::scatter(
        &format!("{label} flow after {} iterations", run.state.iteration),
        &[
            Layer { label: "target".into(), color: "#7f7f7f".into(), radius: 2.5, opacity: 0.6, points: pairs(&q) },
            Layer { label: "initial".into(), color: PALETTE[0].into(), radius: 2.0, opacity: 0.25, points: pairs(&p0) },
            Layer { label: "final".into(), color: PALETTE[1].into(), radius: 2.5, opacity: 0.9, points: pairs(&last) },
        ],
    );
    out.text("flow.svg", &overlay)?;

    let mut curves = vec![Series {
        label: "objective".into(),
        color: PALETTE[0].into(),
        points: run.trace.iter().map(|r| (r.iter as f64, r.objective)).collect(),
    }];
    let w2: Vec<(f64, f64)> = run.trace.iter().filter_map(|r| r.w2.map(|v| (r.iter as f64, v))).collect();
    let energy: Vec<(f64, f64)> = run.trace.iter().filter_map(|r| r.energy_dist.map(|v| (r.iter as f64, v))).collect();
    for (i, (name, pts)) in [("w2", w2), ("energy distance", energy)].into_iter().enumerate() {
        if !pts.is_empty() {
            curves.push(Series { label: name.into(), color: PALETTE[i + 1].into(), points: pts });
        }
    }
    out.text("trace.svg", &svg::line_chart(&format!("{label} flow trace"), "iteration", "value", &curves, Scale::Linear, Scale::Log))?;
    out.text("config.json", &effective(cfg, global))?;

    let mut summary = vec![format!(
        "{label}: {} iterations, stop = {:?}, step size = {:.4e}, objective {:.6e} -> {:.6e}",
        run.state.iteration,
        run.stop,
        run.step_size,
        run.state.objective_history[0],
        run.state.objective()
    )];
    let first_w2 = run.trace.first().and_then(|r| r.w2);
    let last_w2 = run.trace.last().and_then(|r| r.w2);
    if let (Some(a), Some(b)) = (first_w2, last_w2) {
        summary.push(format!("w2 {a:.6} -> {b:.6} (ratio {:.4})", b / a));
    }
    Ok(out.finish(summary, Vec::new()))
}

/// Applies `--alpha`, `--sigma`, `--n`, `--optimizer`, `--max-iters` and
/// `--objective` to a flow config.
pub fn override_flow(
    cfg: &mut FlowConfig,
    objective: Option<&str>,
    alpha: Option<f64>,
    sigma: Option<f64>,
    n: Option<usize>,
    method: Option<Method>,
    max_iters: Option<usize>,
) -> Result<()> {
    match objective {
        Some("mmd") => cfg.objective = Objective::Mmd,
        Some("kkl") if !matches!(cfg.objective, Objective::Kkl { .. }) => cfg.objective = Objective::Kkl { alpha: 0.01 },
        _ => {}
    }
    if let Some(a) = alpha {
        match &mut cfg.objective {
            Objective::Kkl { alpha } => *alpha = a,
            Objective::Mmd => return Err(CliError::Invalid("--alpha needs the kkl objective".into())),
        }
    }
    if let Some(s) = sigma {
        cfg.kernel = KernelSpec::gaussian(s)?;
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(m) = method {
        cfg.optimizer.method = m;
    }
    if let Some(it) = max_iters {
        cfg.optimizer.max_iters = it;
    }
    cfg.optimizer.validate()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_violating_rows_fail() {
        let row = |abs_dev| SkewnessRow { alpha: 0.1, kkl_alpha: 1.0, kkl_exact: 1.2, abs_dev, bound: 0.3 };
        let f = bound_failures(&[row(0.2), row(0.3), row(0.4)]);
        assert_eq!(f.len(), 1);
        assert!(f[0].contains("abs_dev=4.000e-1"), "{}", f[0]);
    }

    #[test]
    fn untagged_sources() {
        let f: CloudSource = serde_json::from_str(r#"{"path": "a.csv"}"#).unwrap();
        assert!(matches!(f, CloudSource::File(_)));
        let s: CloudSource =
            serde_json::from_str(r#"{"spec": {"family": "exponential", "rate": 1.0, "dim": 2}, "n": 5}"#).unwrap();
        assert!(matches!(s, CloudSource::Sample(SampleSource { n: 5, .. })));
        assert!(serde_json::from_str::<CloudSource>(r#"{"path": "a.csv", "n": 3}"#).is_err());
    }

    #[test]
    fn flow_overrides() {
        let mut cfg = FlowConfig::default();
        override_flow(&mut cfg, None, Some(0.2), Some(0.7), Some(50), Some(Method::Gd), Some(7)).unwrap();
        assert_eq!(cfg.objective, Objective::Kkl { alpha: 0.2 });
        assert_eq!(cfg.kernel, KernelSpec::Gaussian { bandwidth: 0.7 });
        assert_eq!((cfg.n, cfg.optimizer.max_iters, cfg.optimizer.method), (50, 7, Method::Gd));
        override_flow(&mut cfg, Some("mmd"), None, None, None, None, None).unwrap();
        assert_eq!(cfg.objective, Objective::Mmd);
        assert!(override_flow(&mut cfg, None, Some(0.2), None, None, None, None).is_err());
        assert!(override_flow(&mut cfg, None, None, Some(-1.0), None, None, None).is_err());
    }
}
