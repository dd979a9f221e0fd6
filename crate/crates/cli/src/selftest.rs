//! Quick numerical checks of an installed build.

use kklflow::flow::{run_flow, FlowOptions, Method, Objective, OptimizerSpec};
use kklflow::study::{skewness_study, SkewnessConfig};
use kklflow::{
    energy_distance, kkl_alpha, kkl_alpha_grid, kkl_alpha_oracle, wasserstein2, DiscreteMeasure, KernelSpec,
    SpectralCache, TargetSpec,
};

use crate::commands::Report;
use crate::error::Result;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn gaussian_pair(seed: u64, n: usize, m: usize) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let p = TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0).sample(n, 2 * seed)?;
    let q = TargetSpec::isotropic_gaussian(vec![0.7, -0.3], 1.5).sample(m, 2 * seed + 1)?;
    Ok((p, q))
}

fn oracle(seed: u64) -> Result<Check> {
    let k = KernelSpec::polynomial(2, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let (p, q) = gaussian_pair(seed * 100 + i, 8, 6)?;
        let a = kkl_alpha(&p, &q, &k, 0.3)?;
        let b = kkl_alpha_oracle(&p, &q, &k, 0.3)?;
        worst = worst.max((a - b).abs() / b.abs().max(1e-12));
    }
    Ok(Check { name: "closed form vs feature-space oracle", passed: worst <= 1e-8, detail: format!("max rel err {worst:.2e}") })
}

fn gradient(seed: u64) -> Result<Check> {
    let k = KernelSpec::gaussian(1.0)?;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let (p, q) = gaussian_pair(seed * 100 + 50 + i, 7, 9)?;
        let cache = SpectralCache::build(&p, &q, &k, 0.2)?;
        let x = [0.3 - 0.1 * i as f64, 0.2];
        let g = cache.wasserstein_gradient(&x)?;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for c in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[c] += h;
            xm[c] -= h;
            let fd = (cache.first_variation(&xp)? - cache.first_variation(&xm)?) / (2.0 * h);
            diff += (g[c] - fd) * (g[c] - fd);
            norm += fd * fd;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-3));
    }
    Ok(Check { name: "gradient vs finite differences", passed: worst <= 1e-5, detail: format!("max rel err {worst:.2e}") })
}

fn monotone(seed: u64) -> Result<Check> {
    let k = KernelSpec::gaussian(1.0)?;
    let (p, q) = gaussian_pair(seed * 100 + 70, 20, 20)?;
    let alphas: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let values = kkl_alpha_grid(&p, &q, &k, &alphas)?;
    let violations = values.windows(2).filter(|w| w[1] > w[0] + 1e-10).count();
    Ok(Check { name: "monotone in alpha", passed: violations == 0, detail: format!("{violations} violations over 19 values") })
}

fn skewness(seed: u64) -> Result<Check> {
    let rows = skewness_study(&SkewnessConfig { seed, ..Default::default() })?;
    let bad = rows.iter().filter(|r| !r.within_bound()).count();
    Ok(Check { name: "skewness bound", passed: bad == 0, detail: format!("{bad} of {} rows above the bound", rows.len()) })
}

fn metrics() -> Result<Check> {
    let a = DiscreteMeasure::from_rows(&[vec![0.0, 0.0]])?;
    let b = DiscreteMeasure::from_rows(&[vec![3.0, 4.0]])?;
    let w2 = wasserstein2(&a, &b)?;
    let ed = energy_distance(&a, &b)?;
    Ok(Check { name: "metric closed forms", passed: w2 == 5.0 && ed == 10.0, detail: format!("w2 = {w2}, energy = {ed}") })
}

fn descent(seed: u64) -> Result<Check> {
    let q = TargetSpec::three_rings().sample(30, 2 * seed)?;
    let p = TargetSpec::isotropic_gaussian(vec![2.5, 0.0], 2.0).sample(30, 2 * seed + 1)?;
    let k = KernelSpec::gaussian(0.5)?;
    let opt = OptimizerSpec { max_iters: 15, ..OptimizerSpec::new(Method::Lbfgs) };
    let run = run_flow(&p, &q, &k, Objective::Kkl { alpha: 0.05 }, &opt, &FlowOptions::default())?;
    let h = &run.state.objective_history;
    let ups = h.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    Ok(Check {
        name: "L-BFGS flow descent",
        passed: ups == 0 && h.last() < h.first(),
        detail: format!("{} iterations, objective {:.4e} -> {:.4e}", run.state.iteration, h[0], h[h.len() - 1]),
    })
}

pub fn checks(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![oracle(seed)?, gradient(seed)?, monotone(seed)?, skewness(seed)?, metrics()?, descent(seed)?])
}

pub fn run(seed: u64) -> Result<Report> {
    let mut report = Report::default();
    for c in checks(seed)? {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let line = format!("{status} {}: {}", c.name, c.detail);
        if !c.passed {
            report.failures.push(line.clone());
        }
        report.summary.push(line);
    }
    Ok(report)
}
