//! Training loop: sample, evaluate losses and gradients, rebalance weights,
//! take an Adam step.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    loss_and_gradients, sample_collocation, sample_fixed, update_adaptive_weights, ComponentGradients, GradNorms,
    LossWeights, PinnError, PointSet, SamplingConfig, WeightMode,
};
use crate::network::{xavier_init, Architecture, Parameters};
use crate::optimize::{AdamState, LrSchedule, OptimizeError};
use crate::physics::{Domain, PdeParams};

/// Everything that defines the optimization problem apart from the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub arch: Architecture,
    pub pde: PdeParams,
    pub domain: Domain,
    pub sampling: SamplingConfig,
}

impl Default for Problem {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            pde: PdeParams::default(),
            domain: Domain::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub lr: f64,
    pub total: f64,
    pub ic: f64,
    pub bc: f64,
    pub res: f64,
    pub w_ic: f64,
    pub w_bc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Parameters,
    pub adam: AdamState,
    pub weights: LossWeights,
    /// Number of completed iterations; also the index of the next one.
    pub iteration: u64,
    pub history: Vec<HistoryEntry>,
    /// Accumulated wall-clock training time. Informational only.
    pub wall_time_s: f64,
}

impl TrainState {
    /// Xavier-initialized parameters drawn from the sampling seed, fresh
    /// optimizer, no history.
    pub fn initial(problem: &Problem, weights: LossWeights) -> Self {
        Self::from_params(xavier_init(&problem.arch, problem.sampling.seed), weights)
    }

    pub fn from_params(params: Parameters, weights: LossWeights) -> Self {
        Self {
            adam: AdamState::new(params.len()),
            params,
            weights,
            iteration: 0,
            history: Vec::new(),
            wall_time_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrainMode {
    /// Zero the Adam moments and step count before continuing.
    Reset,
    /// Continue with the stored moments and step count.
    Preserve,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state has {state} parameters, architecture needs {arch}")]
    ArchitectureMismatch { state: usize, arch: usize },
    /// Training stopped; `last_good` is the state before the failing iteration.
    #[error("non-finite values at iteration {iteration}: {reason}")]
    NonFinite {
        iteration: u64,
        reason: String,
        last_good: Box<TrainState>,
    },
}

/// Gradient magnitudes for the weight update: the largest entry of the
/// residual gradient and the mean absolute entry of the IC and BC gradients.
pub fn grad_norms(g: &ComponentGradients) -> GradNorms {
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64;
    GradNorms {
        ic: mean(&g.ic),
        bc: mean(&g.bc),
        res: max(&g.res),
    }
}

fn validate(problem: &Problem, state: &TrainState) -> Result<(), TrainError> {
    problem.arch.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    problem.pde.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    problem.domain.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    problem.sampling.validate().map_err(TrainError::Config)?;
    state.weights.validate().map_err(TrainError::Config)?;
    let arch = problem.arch.param_count();
    if state.params.len() != arch || state.adam.len() != arch {
        return Err(TrainError::ArchitectureMismatch {
            state: state.params.len().min(state.adam.len()),
            arch,
        });
    }
    Ok(())
}

/// Runs `iterations` more iterations with learning rate `schedule.lr_at(k)`
/// at global iteration `k`.
pub fn train(
    state: TrainState,
    problem: &Problem,
    schedule: &LrSchedule,
    iterations: u64,
) -> Result<TrainState, TrainError> {
    train_observed(state, problem, schedule, iterations, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_observed(
    mut state: TrainState,
    problem: &Problem,
    schedule: &LrSchedule,
    iterations: u64,
    mut observe: impl FnMut(&HistoryEntry),
) -> Result<TrainState, TrainError> {
    validate(problem, &state)?;
    if iterations == 0 {
        return Ok(state);
    }
    let started = Instant::now();
    let (ic, bc) = sample_fixed(&problem.sampling, &problem.domain);
    let mut points = PointSet {
        collocation: Vec::new(),
        ic,
        bc,
    };

    for _ in 0..iterations {
        let k = state.iteration;
        points.collocation = sample_collocation(&problem.sampling, &problem.domain, k);
        let fail = |state: TrainState, reason: String, started: Instant| {
            let mut last_good = state;
            last_good.wall_time_s += started.elapsed().as_secs_f64();
            TrainError::NonFinite {
                iteration: k,
                reason,
                last_good: Box::new(last_good),
            }
        };

        let (comps, grads) =
            match loss_and_gradients(&problem.arch, &state.params, &problem.pde, &problem.domain, &points) {
                Ok(v) => v,
                Err(e @ PinnError::NonFiniteOutput { .. }) => return Err(fail(state, e.to_string(), started)),
                Err(e) => return Err(TrainError::Config(e.to_string())),
            };

        let weights = match state.weights.mode {
            WeightMode::Adaptive => update_adaptive_weights(&state.weights, &grad_norms(&grads)),
            WeightMode::Fixed => state.weights,
        };
        let total = weights.total(&comps);
        if !total.is_finite() {
            return Err(fail(state, format!("total loss is {total}"), started));
        }

        let lr = schedule.lr_at(k);
        let combined = grads.combine(weights.w_ic, weights.w_bc, weights.w_res);
        if let Err(e @ OptimizeError::NonFiniteGradient { .. }) =
            state.adam.step(state.params.as_mut_slice(), &combined, lr)
        {
            return Err(fail(state, e.to_string(), started));
        }

        let entry = HistoryEntry {
            iteration: k,
            lr,
            total,
            ic: comps.ic,
            bc: comps.bc,
            res: comps.res,
            w_ic: weights.w_ic,
            w_bc: weights.w_bc,
        };
        state.weights = weights;
        state.iteration += 1;
        state.history.push(entry);
        observe(&entry);
    }
    state.wall_time_s += started.elapsed().as_secs_f64();
    Ok(state)
}

/// Continues training from `state` at constant learning rate `lr`.
pub fn retrain(
    state: TrainState,
    problem: &Problem,
    lr: f64,
    iterations: u64,
    mode: RetrainMode,
) -> Result<TrainState, TrainError> {
    retrain_observed(state, problem, lr, iterations, mode, |_| {})
}

/// [`retrain`] with a callback after every iteration.
pub fn retrain_observed(
    mut state: TrainState,
    problem: &Problem,
    lr: f64,
    iterations: u64,
    mode: RetrainMode,
    observe: impl FnMut(&HistoryEntry),
) -> Result<TrainState, TrainError> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(TrainError::Config(format!("learning rate must be positive, got {lr}")));
    }
    validate(problem, &state)?;
    if mode == RetrainMode::Reset {
        state.adam.reset();
    }
    train_observed(state, problem, &LrSchedule::constant(lr), iterations, observe)
}
