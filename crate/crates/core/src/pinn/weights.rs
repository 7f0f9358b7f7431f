//! Loss weights and the adaptive balancing rule.
//!
//! In adaptive mode the initial- and boundary-condition weights track the
//! ratio of the residual gradient magnitude to their own gradient magnitude,
//! smoothed exponentially and clamped to `[1, ceiling]`. The residual weight
//! stays at 1.

use serde::{Deserialize, Serialize};

use super::LossComponents;

/// Smoothing factor of the adaptive update.
pub const ADAPTIVE_RATE: f64 = 0.1;
pub const DEFAULT_CEILING: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_ic: f64,
    pub w_bc: f64,
    pub w_res: f64,
    pub mode: WeightMode,
    pub ceiling: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::adaptive(DEFAULT_CEILING)
    }
}

/// Gradient magnitudes of the three loss components with respect to `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradNorms {
    pub ic: f64,
    pub bc: f64,
    pub res: f64,
}

impl LossWeights {
    pub fn fixed(w_ic: f64, w_bc: f64, w_res: f64) -> Self {
        Self {
            w_ic,
            w_bc,
            w_res,
            mode: WeightMode::Fixed,
            ceiling: DEFAULT_CEILING,
        }
    }

    pub fn adaptive(ceiling: f64) -> Self {
        Self {
            w_ic: 1.0,
            w_bc: 1.0,
            w_res: 1.0,
            mode: WeightMode::Adaptive,
            ceiling,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.w_ic, self.w_bc, self.w_res];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(format!("weights must be finite and nonnegative, got {all:?}"));
        }
        if self.mode == WeightMode::Adaptive && !(self.ceiling >= 1.0 && self.ceiling.is_finite()) {
            return Err(format!("adaptive ceiling must be ≥ 1, got {}", self.ceiling));
        }
        Ok(())
    }

    pub fn total(&self, c: &LossComponents) -> f64 {
        total_loss(c, self)
    }
}

/// `w_ic·L_ic + w_bc·L_bc + w_res·L_res`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.w_ic * c.ic + w.w_bc * c.bc + w.w_res * c.res
}

/// One smoothing step toward `g_res / g_k`, clamped to `[1, ceiling]`.
/// Fixed-mode weights are returned unchanged.
pub fn update_adaptive_weights(w: &LossWeights, norms: &GradNorms) -> LossWeights {
    if w.mode == WeightMode::Fixed {
        return *w;
    }
    let step = |current: f64, g_k: f64| -> f64 {
        let ratio = norms.res / g_k;
        if !ratio.is_finite() || g_k.is_infinite() {
            // g_k = 0 or ∞ (or a NaN norm): no usable signal this round
            return current;
        }
        ((1.0 - ADAPTIVE_RATE) * current + ADAPTIVE_RATE * ratio).clamp(1.0, w.ceiling)
    };
    LossWeights {
        w_ic: step(w.w_ic, norms.ic),
        w_bc: step(w.w_bc, norms.bc),
        w_res: 1.0,
        ..*w
    }
}
