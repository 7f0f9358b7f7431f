//! Versioned JSON checkpoints.
//!
//! Floats are written as shortest round-trip decimals and parsed back
//! exactly, so save → load → save reproduces the same bytes.

use std::path::Path;

use fisher_pinn::network::{Architecture, Parameters};
use fisher_pinn::optimize::AdamState;
use fisher_pinn::pinn::{LossWeights, TrainState};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT: &str = "fisher-pinn-checkpoint";
pub const VERSION: u32 = 1;

/// Non-reproducible information. Excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metadata {
    pub tool_version: String,
    pub wall_time_s: f64,
    pub created_unix_s: u64,
}

impl Metadata {
    pub fn now(wall_time_s: f64) -> Self {
        let created_unix_s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            created_unix_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub iteration: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub params: Parameters,
    pub adam: Option<AdamState>,
    pub metadata: Metadata,
}

impl Checkpoint {
    pub fn from_state(arch: &Architecture, seed: u64, state: &TrainState, metadata: Metadata) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            architecture: arch.clone(),
            iteration: state.iteration,
            seed,
            weights: state.weights,
            params: state.params.clone(),
            adam: Some(state.adam.clone()),
            metadata,
        }
    }

    /// Training state to resume from. A missing optimizer state becomes a
    /// fresh one; callers that need the stored moments check `adam` first.
    pub fn to_state(&self) -> TrainState {
        let mut state = TrainState::from_params(self.params.clone(), self.weights);
        if let Some(adam) = &self.adam {
            state.adam = adam.clone();
        }
        state.iteration = self.iteration;
        state
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Checkpoint(format!("not valid JSON: {e}")))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(FORMAT) => {}
            other => return Err(CliError::Checkpoint(format!("unexpected format tag {other:?}"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == VERSION as u64 => {}
            other => {
                return Err(CliError::Checkpoint(format!(
                    "unsupported checkpoint version {other:?}; this build reads version {VERSION}"
                )))
            }
        }
        let ckpt: Self = serde_json::from_value(value).map_err(|e| CliError::Checkpoint(e.to_string()))?;
        ckpt.check_consistent()?;
        Ok(ckpt)
    }

    fn check_consistent(&self) -> Result<(), CliError> {
        self.architecture
            .validate()
            .map_err(|e| CliError::Checkpoint(e.to_string()))?;
        let n = self.architecture.param_count();
        if self.params.len() != n {
            return Err(CliError::Checkpoint(format!(
                "{} parameters stored, architecture needs {n}",
                self.params.len()
            )));
        }
        if let Some(adam) = &self.adam {
            if adam.m.len() != n || adam.v.len() != n {
                return Err(CliError::Checkpoint(format!(
                    "optimizer moments have lengths {}/{}, expected {n}",
                    adam.m.len(),
                    adam.v.len()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}
