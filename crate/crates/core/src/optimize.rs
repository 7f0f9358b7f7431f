//! Adam with bias correction and a stepwise exponential learning-rate schedule.
//!
//! The optimizer state is a plain serializable value so that a checkpoint can
//! either carry it forward or drop it (the reset-vs-preserve retraining modes).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("gradient component {index} is not finite ({value})")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("length mismatch: {params} parameters, {grads} gradient entries, {moments} moment entries")]
    Length {
        params: usize,
        grads: usize,
        moments: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Forgets the moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|m| *m = 0.0);
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.step_count = 0;
    }

    /// One in-place Adam update. The state is left untouched on error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), OptimizeError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(OptimizeError::Length {
                params: params.len(),
                grads: grads.len(),
                moments: self.m.len(),
            });
        }
        if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(OptimizeError::NonFiniteGradient { index, value });
        }

        self.step_count += 1;
        let k = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(k);
        let bias2 = 1.0 - b2.powi(k);
        for (((theta, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *theta -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grads: &[f64],
    lr: f64,
) -> Result<(Vec<f64>, AdamState), OptimizeError> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.step(&mut params, grads, lr)?;
    Ok((params, state))
}

/// `lr(k) = initial_lr · decay_factor^⌊k / decay_every⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            decay_factor: 0.99,
            decay_every: 100,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial_lr: lr,
            decay_factor: 1.0,
            decay_every: 1,
        }
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        let every = self.decay_every.max(1);
        let exponent = (iteration / every).min(i32::MAX as u64) as i32;
        self.initial_lr * self.decay_factor.powi(exponent)
    }
}
