//! Explicit forward-Euler / central-difference solver.
//!
//! Interior nodes advance with
//! `u_i ← u_i + Δt·(D·(u_{i+1} − 2u_i + u_{i−1})/Δx² + R·u_i·(1 − u_i))`;
//! both end nodes are then overwritten with the Dirichlet data at the new
//! time level.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{boundary_condition, initial_condition, Domain, PdeParams, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdmError {
    #[error(
        "time step {dt} exceeds the diffusion stability limit {limit}; use at least {min_steps} time steps"
    )]
    Cfl { dt: f64, limit: f64, min_steps: usize },
    #[error("grid needs at least 3 spatial nodes and 1 time step (got nx={nx}, nt={nt})")]
    TooSmall { nx: usize, nt: usize },
    #[error("field has {got} nodes, grid has {expected}")]
    FieldLength { expected: usize, got: usize },
}

/// Uniform space-time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid {
    pub const DEFAULT_NX: usize = 201;
    pub const DEFAULT_NT: usize = 1600;

    pub fn new(domain: &Domain, nx: usize, nt: usize) -> Result<Self, FdmError> {
        if nx < 3 || nt < 1 {
            return Err(FdmError::TooSmall { nx, nt });
        }
        Ok(Self {
            nx,
            nt,
            dx: domain.length() / (nx - 1) as f64,
            dt: domain.duration() / nt as f64,
        })
    }

    pub fn positions(&self, domain: &Domain) -> Vec<f64> {
        (0..self.nx)
            .map(|i| domain.x_min + i as f64 * self.dx)
            .collect()
    }

    pub fn times(&self, domain: &Domain) -> Vec<f64> {
        (0..=self.nt)
            .map(|n| domain.t_min + n as f64 * self.dt)
            .collect()
    }

    /// Checks `dt ≤ dx²/(2D)`.
    pub fn check_stability(&self, p: &PdeParams, domain: &Domain) -> Result<(), FdmError> {
        let limit = cfl_limit(p, self.dx);
        if self.dt > limit {
            return Err(FdmError::Cfl {
                dt: self.dt,
                limit,
                min_steps: (domain.duration() / limit).ceil() as usize,
            });
        }
        Ok(())
    }
}

/// Solution values at one time level.
pub type Field = Vec<f64>;

/// Largest stable explicit time step for the diffusion term, `dx²/(2D)`.
pub fn cfl_limit(p: &PdeParams, dx: f64) -> f64 {
    dx * dx / (2.0 * p.diffusion)
}

/// Advances `field` from `t_n` to `t_n + dt`.
pub fn step(
    p: &PdeParams,
    domain: &Domain,
    grid: &Grid,
    field: &[f64],
    t_n: f64,
) -> Result<Field, FdmError> {
    if field.len() != grid.nx {
        return Err(FdmError::FieldLength {
            expected: grid.nx,
            got: field.len(),
        });
    }
    let mut next = vec![0.0; grid.nx];
    step_into(p, domain, grid, field, t_n + grid.dt, &mut next);
    Ok(next)
}

/// Interior update from `u`; boundary values are taken at `t_next`.
fn step_into(p: &PdeParams, domain: &Domain, grid: &Grid, u: &[f64], t_next: f64, next: &mut [f64]) {
    let diff = p.diffusion / (grid.dx * grid.dx);
    for i in 1..grid.nx - 1 {
        let lap = u[i + 1] - 2.0 * u[i] + u[i - 1];
        next[i] = u[i] + grid.dt * (diff * lap + p.reaction * u[i] * (1.0 - u[i]));
    }
    next[0] = boundary_condition(p, domain, Side::Left, t_next);
    next[grid.nx - 1] = boundary_condition(p, domain, Side::Right, t_next);
}

/// Full space-time solution: row `n` is time level `t_n`, column `i` is node `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub values: Array2<f64>,
}

impl Solution {
    pub fn final_row(&self) -> Field {
        self.values.row(self.values.nrows() - 1).to_vec()
    }
}

fn initial_field(p: &PdeParams, grid: &Grid, domain: &Domain) -> Field {
    grid.positions(domain)
        .into_iter()
        .map(|x| initial_condition(p, x))
        .collect()
}

pub fn solve(p: &PdeParams, domain: &Domain, grid: &Grid) -> Result<Solution, FdmError> {
    grid.check_stability(p, domain)?;
    let times = grid.times(domain);
    let mut values = Array2::zeros((grid.nt + 1, grid.nx));
    values.row_mut(0).assign(&ndarray::ArrayView1::from(&initial_field(p, grid, domain)));
    let mut next = vec![0.0; grid.nx];
    for n in 0..grid.nt {
        let current = values.row(n).to_vec();
        step_into(p, domain, grid, &current, times[n + 1], &mut next);
        values.row_mut(n + 1).assign(&ndarray::ArrayView1::from(&next));
    }
    Ok(Solution {
        times,
        positions: grid.positions(domain),
        values,
    })
}

/// Streaming variant of [`solve`] that keeps only two time levels.
pub fn solve_final(p: &PdeParams, domain: &Domain, grid: &Grid) -> Result<Field, FdmError> {
    grid.check_stability(p, domain)?;
    let mut current = initial_field(p, grid, domain);
    let mut next = vec![0.0; grid.nx];
    for n in 0..grid.nt {
        let t_next = domain.t_min + (n + 1) as f64 * grid.dt;
        step_into(p, domain, grid, &current, t_next, &mut next);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}
