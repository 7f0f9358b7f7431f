//! Fisher-KPP problem instance: `u_t = D·u_xx + R·u·(1 − u)` on a rectangle,
//! with initial and Dirichlet boundary data taken from the logistic
//! traveling-wave profile `1 / (1 + exp(k·(x − c·t)))`, `k = √(R/2D)`,
//! `c = √(2DR)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("diffusion coefficient must be positive and finite, got {0}")]
    Diffusion(f64),
    #[error("reaction rate must be positive and finite, got {0}")]
    Reaction(f64),
    #[error("empty interval [{lo}, {hi}] for {axis}")]
    Interval { axis: &'static str, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    /// Diffusion coefficient `D`.
    pub diffusion: f64,
    /// Reaction rate `R`.
    pub reaction: f64,
}

impl Default for PdeParams {
    fn default() -> Self {
        Self {
            diffusion: 0.01,
            reaction: 1.0,
        }
    }
}

impl PdeParams {
    pub fn new(diffusion: f64, reaction: f64) -> Result<Self, PhysicsError> {
        let p = Self {
            diffusion,
            reaction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(PhysicsError::Diffusion(self.diffusion));
        }
        if !(self.reaction > 0.0 && self.reaction.is_finite()) {
            return Err(PhysicsError::Reaction(self.reaction));
        }
        Ok(())
    }

    /// Front steepness `√(R/2D)`.
    pub fn steepness(&self) -> f64 {
        (self.reaction / (2.0 * self.diffusion)).sqrt()
    }

    /// Front speed `√(2DR)`.
    pub fn wave_speed(&self) -> f64 {
        (2.0 * self.diffusion * self.reaction).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            t_min: 0.0,
            t_max: 1.0,
        }
    }
}

impl Domain {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.x_min < self.x_max) {
            return Err(PhysicsError::Interval {
                axis: "x",
                lo: self.x_min,
                hi: self.x_max,
            });
        }
        if !(self.t_min < self.t_max) {
            return Err(PhysicsError::Interval {
                axis: "t",
                lo: self.t_min,
                hi: self.t_max,
            });
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn duration(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (self.t_min..=self.t_max).contains(&t) && (self.x_min..=self.x_max).contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

pub fn exact_solution(p: &PdeParams, x: f64, t: f64) -> f64 {
    1.0 / (1.0 + (p.steepness() * (x - p.wave_speed() * t)).exp())
}

/// Same profile as [`exact_solution`], built from graph primitives so it can
/// be differentiated.
pub fn exact_solution_expr<'g>(p: &PdeParams, x: Expr<'g>, t: Expr<'g>) -> Expr<'g> {
    let g = x.graph();
    let one = g.constant(1.0);
    let z = (x - t * p.wave_speed()) * p.steepness();
    one / (one + z.exp())
}

pub fn initial_condition(p: &PdeParams, x: f64) -> f64 {
    exact_solution(p, x, 0.0)
}

pub fn boundary_condition(p: &PdeParams, domain: &Domain, side: Side, t: f64) -> f64 {
    let x = match side {
        Side::Left => domain.x_min,
        Side::Right => domain.x_max,
    };
    exact_solution(p, x, t)
}

/// `u_t − D·u_xx − R·u·(1 − u)`.
pub fn residual_operator(p: &PdeParams, u_t: f64, u_xx: f64, u: f64) -> f64 {
    u_t - p.diffusion * u_xx - p.reaction * u * (1.0 - u)
}

pub fn residual_operator_expr<'g>(
    p: &PdeParams,
    u_t: Expr<'g>,
    u_xx: Expr<'g>,
    u: Expr<'g>,
) -> Expr<'g> {
    u_t - u_xx * p.diffusion - u * (1.0 - u) * p.reaction
}
