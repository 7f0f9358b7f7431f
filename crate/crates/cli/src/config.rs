//! Experiment configuration: one JSON document, every field optional.

use std::path::{Path, PathBuf};

use fisher_pinn::fdm::Grid;
use fisher_pinn::network::Architecture;
use fisher_pinn::optimize::LrSchedule;
use fisher_pinn::physics::{Domain, PdeParams};
use fisher_pinn::pinn::{LossWeights, Problem, SamplingConfig, WeightMode, DEFAULT_CEILING};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdmConfig {
    pub nx: usize,
    pub nt: usize,
}

impl Default for FdmConfig {
    fn default() -> Self {
        Self { nx: 201, nt: 1600 }
    }
}

/// Uniform grid for whole-domain error fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub nx: usize,
    pub nt: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { nx: 201, nt: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainConfig {
    pub lr: f64,
    /// Iterations per phase; an error report is recorded after each phase.
    pub phases: Vec<u64>,
    pub preserve_optimizer: bool,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            phases: vec![20_000, 20_000],
            preserve_optimizer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pde: PdeParams,
    pub domain: Domain,
    pub architecture: Architecture,
    pub sampling: SamplingConfig,
    pub schedule: LrSchedule,
    pub iterations: u64,
    pub weight_mode: WeightMode,
    pub weight_ceiling: f64,
    pub fdm: FdmConfig,
    pub eval: EvalConfig,
    pub retrain: RetrainConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pde: PdeParams::default(),
            domain: Domain::default(),
            architecture: Architecture::default(),
            sampling: SamplingConfig::default(),
            schedule: LrSchedule::default(),
            iterations: 10_000,
            weight_mode: WeightMode::Adaptive,
            weight_ceiling: DEFAULT_CEILING,
            fdm: FdmConfig::default(),
            eval: EvalConfig::default(),
            retrain: RetrainConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Checks everything that can be checked without running anything.
    /// Grid stability is left to the solver so that it reports the limit.
    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.pde.validate().map_err(|e| config(&e))?;
        self.domain.validate().map_err(|e| config(&e))?;
        self.architecture.validate().map_err(|e| config(&e))?;
        self.sampling.validate().map_err(|e| config(&e))?;
        self.initial_weights().validate().map_err(|e| config(&e))?;
        let lr = self.schedule.initial_lr;
        if !(lr.is_finite() && lr > 0.0) || !(self.schedule.decay_factor > 0.0 && self.schedule.decay_factor <= 1.0)
        {
            return Err(CliError::Config(format!("invalid learning-rate schedule {:?}", self.schedule)));
        }
        if !(self.retrain.lr.is_finite() && self.retrain.lr > 0.0) {
            return Err(CliError::Config(format!("retrain lr must be positive, got {}", self.retrain.lr)));
        }
        Grid::new(&self.domain, self.fdm.nx, self.fdm.nt).map_err(|e| config(&e))?;
        if self.eval.nx < 2 || self.eval.nt < 2 {
            return Err(CliError::Config("evaluation grid needs at least 2 nodes per axis".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Problem {
        Problem {
            arch: self.architecture.clone(),
            pde: self.pde,
            domain: self.domain,
            sampling: self.sampling,
        }
    }

    pub fn initial_weights(&self) -> LossWeights {
        match self.weight_mode {
            WeightMode::Adaptive => LossWeights::adaptive(self.weight_ceiling),
            WeightMode::Fixed => LossWeights {
                ceiling: self.weight_ceiling,
                ..LossWeights::fixed(1.0, 1.0, 1.0)
            },
        }
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(&self.domain, self.fdm.nx, self.fdm.nt).map_err(|e| CliError::Config(e.to_string()))
    }
}
