//! Argument parsing and command dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rbse::oracle::SuiteConfig;
use serde::de::DeserializeOwned;

use crate::commands::{gradcheck, inspect, oneshot, represent, synthetic, train};
use crate::config::resolve;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rbse", version, about = "Restricted Boltzmann stochastic ensembles")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress per-epoch progress.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by config-driven commands.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory; receives a frozen copy of the resolved config.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Shorthand for the command's seed key.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn resolve<C: DeserializeOwned>(&self, seed_key: &str) -> CliResult<C> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("{seed_key}={s}"));
        }
        resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a plain RBM with CD-k.
    TrainRbm(RunArgs),
    /// Train a stochastic ensemble with EM contrastive divergence.
    TrainRbse(RunArgs),
    /// Verify gradients and identities against exact enumeration.
    Gradcheck(GradcheckArgs),
    /// Round trips, stochastic clouds and outlier attraction on 2-D data.
    SyntheticDemo(RunArgs),
    /// Compare pixel, RBM, DropConnect and ensemble features on one-shot splits.
    Oneshot(RunArgs),
    /// Write filter and probability tiles of a model as PGM grids.
    Inspect(InspectArgs),
    /// Dump representations of a dataset under a model.
    Represent(RunArgs),
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub max_visible: usize,
    #[arg(long, default_value_t = 3)]
    pub max_hidden: usize,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb the analytic gradient (exercises the failure path).
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Tile shape as ROWSxCOLS; defaults to a square when possible.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<(usize, usize)>,
    /// Probability clamp; `[ε, 1 − ε]` maps to black..white.
    #[arg(long, default_value_t = rbse::ensemble::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once('x').ok_or_else(|| format!("`{s}` is not ROWSxCOLS"))?;
    let r = r.parse().map_err(|_| format!("bad row count in `{s}`"))?;
    let c = c.parse().map_err(|_| format!("bad column count in `{s}`"))?;
    Ok((r, c))
}

fn write_report(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::file(parent))?;
    }
    std::fs::write(path, text).map_err(CliError::file(path))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::TrainRbm(args) => {
            let cfg: train::RbmRunConfig = args.resolve("train.seed")?;
            train::run_rbm(&cfg, &args.out, cli.quiet)?;
            println!("wrote {}", args.out.join("model.json").display());
        }
        Command::TrainRbse(args) => {
            let cfg: train::RbseRunConfig = args.resolve("train.seed")?;
            train::run_rbse(&cfg, &args.out, cli.quiet)?;
            println!("wrote {}", args.out.join("model.json").display());
        }
        Command::Gradcheck(args) => {
            let cfg = SuiteConfig {
                max_visible: args.max_visible,
                max_hidden: args.max_hidden,
                trials: args.trials,
                seed: args.seed,
                corrupt_gradient: args.corrupt_gradient,
            };
            let (report, json) = gradcheck::run(&cfg)?;
            print!("{json}");
            if let Some(path) = &args.out {
                write_report(path, &json)?;
            }
            if !report.passed {
                return Err(gradcheck::failure(&report));
            }
        }
        Command::SyntheticDemo(args) => {
            let cfg: synthetic::SyntheticConfig = args.resolve("seed")?;
            crate::config::check(cfg.problems())?;
            crate::config::freeze(&cfg, &args.out)?;
            let outcome = synthetic::run(&cfg)?;
            let summary = outcome.write(&cfg, &args.out)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(rbse::Error::from)?);
        }
        Command::Oneshot(args) => {
            let cfg: oneshot::OneShotRunConfig = args.resolve("oneshot.seed")?;
            let result = oneshot::run(&cfg, &args.out)?;
            for p in result.summary().pipelines {
                println!("{:<12} mean {:.4}  std {:.4}", p.pipeline.name(), p.mean, p.std);
            }
        }
        Command::Inspect(args) => {
            let report = inspect::run(&args.model, &args.out, args.shape, args.epsilon)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(rbse::Error::from)?);
        }
        Command::Represent(args) => {
            let cfg: represent::RepresentConfig = args.resolve("seed")?;
            let rows = represent::run(&cfg, &args.out)?;
            println!("wrote {rows} representations to {}", args.out.join("representations.csv").display());
        }
    }
    Ok(())
}
