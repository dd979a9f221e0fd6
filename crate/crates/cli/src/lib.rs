//! Command-line front end for `kklflow`.
//!
//! Every subcommand reads an optional JSON config, applies flag overrides on
//! top (defaults < config file < `KKLFLOW_THREADS` < flags), writes CSV and
//! SVG files into the output directory and returns a [`Report`].

pub mod commands;
pub mod config;
mod error;
pub mod selftest;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kklflow::flow::Method;
use kklflow::study::{ConcentrationConfig, FlowConfig, SkewnessConfig};
use kklflow::KernelSpec;

pub use commands::{CloudSource, DivergenceConfig, Output, Report};
pub use error::{CliError, Result};

use config::GlobalSettings;

#[derive(Debug, Parser)]
#[command(name = "kklflow", version, about = "Regularized kernel KL divergence, studies and particle flows")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for runs that are parallel across seeds.
    #[arg(long, global = true, env = "KKLFLOW_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate KKL_alpha and MMD^2 between two point clouds.
    Divergence(DivergenceArgs),
    /// Mean and spread of the empirical divergence as the sample size grows.
    Concentration(ConcentrationArgs),
    /// Regularized vs exact divergence on nested supports, against the bound.
    Skewness(SkewnessArgs),
    /// Run a particle flow toward a target cloud.
    Flow(FlowArgs),
    /// Run a handful of fast numerical checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    /// Comma-separated regularization values.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Use a Gaussian kernel with this bandwidth.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Sample size for sampled clouds.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Independent runs per sample size.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SkewnessArgs {
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Kkl,
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Gd,
    GdLinesearch,
    Lbfgs,
}

impl From<OptimizerArg> for Method {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Gd => Method::Gd,
            OptimizerArg::GdLinesearch => Method::GdLinesearch,
            OptimizerArg::Lbfgs => Method::Lbfgs,
        }
    }
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Regularization of the KKL objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of particles.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

fn gaussian(sigma: Option<f64>, kernel: &mut KernelSpec) -> Result<()> {
    if let Some(s) = sigma {
        *kernel = KernelSpec::gaussian(s)?;
    }
    Ok(())
}

fn out_dir(cli: &GlobalArgs, g: &GlobalSettings) -> PathBuf {
    match (&cli.out, &g.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => g.base_dir.join(p),
        (None, None) => PathBuf::from("out"),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
        None => f(),
    }
}

/// Runs the parsed command line.
pub fn run(cli: &Cli) -> Result<Report> {
    let g = &cli.global;
    let cfg_path = g.config.as_deref();
    match &cli.command {
        Command::Divergence(a) => {
            let (mut cfg, settings) = config::load::<DivergenceConfig>(cfg_path)?;
            if !a.alpha.is_empty() {
                cfg.alphas = a.alpha.clone();
            }
            gaussian(a.sigma, &mut cfg.kernel)?;
            if let Some(n) = a.n {
                let mut applied = false;
                for src in [&mut cfg.p, &mut cfg.q] {
                    if let CloudSource::Sample(s) = src {
                        s.n = n;
                        applied = true;
                    }
                }
                if !applied {
                    return Err(CliError::Invalid("--n only applies to sampled clouds".into()));
                }
            }
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let out = Output::create(out_dir(g, &settings))?;
            commands::divergence(&cfg, &settings, out)
        }
        Command::Concentration(a) => {
            let (mut cfg, mut settings) = config::load::<ConcentrationConfig>(cfg_path)?;
            if !a.alpha.is_empty() {
                cfg.alphas = a.alpha.clone();
            }
            gaussian(a.sigma, &mut cfg.kernel)?;
            if !a.n.is_empty() {
                cfg.ns = a.n.clone();
            }
            if let Some(r) = a.runs {
                cfg.runs = r;
            }
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(t) = g.threads {
                settings.threads = Some(t as usize);
            }
            let out = Output::create(out_dir(g, &settings))?;
            in_pool(settings.threads, || commands::concentration(&cfg, &settings, out))
        }
        Command::Skewness(a) => {
            let (mut cfg, settings) = config::load::<SkewnessConfig>(cfg_path)?;
            if !a.alpha.is_empty() {
                cfg.alphas = a.alpha.clone();
            }
            gaussian(a.sigma, &mut cfg.kernel)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let out = Output::create(out_dir(g, &settings))?;
            commands::skewness(&cfg, &settings, out)
        }
        Command::Flow(a) => {
            let (mut cfg, settings) = config::load::<FlowConfig>(cfg_path)?;
            let objective = a.objective.map(|o| match o {
                ObjectiveArg::Kkl => "kkl",
                ObjectiveArg::Mmd => "mmd",
            });
            commands::override_flow(&mut cfg, objective, a.alpha, a.sigma, a.n, a.optimizer.map(Into::into), a.max_iters)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let out = Output::create(out_dir(g, &settings))?;
            commands::flow(&cfg, &settings, out)
        }
        Command::Selftest => selftest::run(g.seed.unwrap_or(0)),
    }
}
