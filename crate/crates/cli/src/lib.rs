//! Command-line front end: configuration, checkpoints, artifact writers and
//! the `train`, `retrain`, `fdm` and `compare` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fisher_pinn::pinn::WeightMode;
use thiserror::Error;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for usage, configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fisher-pinn", version, about = "PINN and finite-difference solvers for the Fisher-KPP equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from Xavier initialization.
    Train(TrainArgs),
    /// Continue training a checkpoint at constant learning rate.
    Retrain(RetrainArgs),
    /// Run the explicit finite-difference solver.
    Fdm(FdmArgs),
    /// Compare a checkpoint, the finite-difference solution and the reference profile.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightModeArg {
    Fixed,
    Adaptive,
}

impl From<WeightModeArg> for WeightMode {
    fn from(m: WeightModeArg) -> Self {
        match m {
            WeightModeArg::Fixed => WeightMode::Fixed,
            WeightModeArg::Adaptive => WeightMode::Adaptive,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for initialization and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub nx: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Initial learning rate of the decay schedule.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    /// Finite-difference grid; only its spatial nodes are used, for the final-time report.
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct RetrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run a single phase of this many iterations.
    #[arg(long, conflicts_with = "phases")]
    pub iterations: Option<u64>,
    /// Comma-separated phase lengths, e.g. `20000,20000`.
    #[arg(long, value_delimiter = ',')]
    pub phases: Option<Vec<u64>>,
    /// Constant learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Keep Adam moments and step count instead of resetting them.
    #[arg(long)]
    pub preserve_optimizer: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct FdmArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

fn base_config(common: &CommonArgs, grid: &GridArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.sampling.seed = seed;
    }
    if let Some(nt) = grid.nt {
        cfg.fdm.nt = nt;
    }
    if let Some(nx) = grid.nx {
        cfg.fdm.nx = nx;
    }
    Ok(cfg)
}

/// Resolves the configuration for a command line: file, then flags.
pub fn resolve_config(command: &Command) -> Result<ExperimentConfig, CliError> {
    match command {
        Command::Train(a) => {
            let mut cfg = base_config(&a.common, &a.grid)?;
            if let Some(n) = a.iterations {
                cfg.iterations = n;
            }
            if let Some(lr) = a.lr {
                cfg.schedule.initial_lr = lr;
            }
            if let Some(m) = a.weight_mode {
                cfg.weight_mode = m.into();
            }
            Ok(cfg)
        }
        Command::Retrain(a) => {
            let mut cfg = base_config(&a.common, &a.grid)?;
            if let Some(n) = a.iterations {
                cfg.retrain.phases = vec![n];
            }
            if let Some(p) = &a.phases {
                cfg.retrain.phases = p.clone();
            }
            if let Some(lr) = a.lr {
                cfg.retrain.lr = lr;
            }
            if a.preserve_optimizer {
                cfg.retrain.preserve_optimizer = true;
            }
            Ok(cfg)
        }
        Command::Fdm(a) => base_config(&a.common, &a.grid),
        Command::Compare(a) => base_config(&a.common, &a.grid),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.command)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Train(_) => {
            let r = commands::cmd_train(&cfg, &out)?;
            eprintln!(
                "relative L2 at t = {}: {:.6e} (max abs {:.3e})",
                r.evaluated_at_t, r.final_time.relative_l2, r.final_time.max_abs_error
            );
        }
        Command::Retrain(a) => {
            let r = commands::cmd_retrain(&cfg, &a.checkpoint, &out)?;
            eprintln!(
                "relative L2 at t = {}: {:.6e} before, {:.6e} after ({:?} optimizer)",
                cfg.domain.t_max, r.initial_relative_l2, r.final_relative_l2, r.mode
            );
        }
        Command::Fdm(_) => {
            let r = commands::cmd_fdm(&cfg, &out)?;
            eprintln!("relative L2 at t = {}: {:.6e}", r.evaluated_at_t, r.final_time.relative_l2);
        }
        Command::Compare(a) => {
            let r = commands::cmd_compare(&cfg, &a.checkpoint, &out)?;
            let c = &r.final_time;
            eprintln!(
                "relative L2 at t = {}: exact-fdm {:.6e}, exact-pinn {:.6e}, pinn-fdm {:.6e}",
                r.evaluated_at_t, c.exact_vs_fdm.relative_l2, c.exact_vs_pinn.relative_l2, c.pinn_vs_fdm.relative_l2
            );
        }
    }
    eprintln!("outputs written to {}", out.display());
    Ok(())
}

/// Sizes the global thread pool from `FISHER_PINN_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("FISHER_PINN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FISHER_PINN_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}
