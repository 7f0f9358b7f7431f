//! The four subcommands. Each takes a validated configuration and an output
//! directory, writes its artifacts there and returns its report.

use std::path::Path;
use std::time::Instant;

use fisher_pinn::fdm::{self, FdmError, Solution};
use fisher_pinn::metrics::{compare_all, error_field, Comparison, ErrorReport, EvalGrid};
use fisher_pinn::network::{predict_grid, Architecture, Parameters};
use fisher_pinn::physics::exact_solution;
use fisher_pinn::pinn::{self, HistoryEntry, RetrainMode, TrainError, TrainState};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Metadata};
use crate::config::ExperimentConfig;
use crate::output;
use crate::CliError;

/// Progress lines go to stderr this often.
const PROGRESS_EVERY: u64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Error at the final time on the finite-difference spatial nodes.
    #[serde(flatten)]
    pub final_time: ErrorReport,
    pub evaluated_at_t: f64,
    /// Error over the whole evaluation grid.
    pub space_time: ErrorReport,
    pub iterations: u64,
    pub seed: u64,
    pub final_loss: Option<HistoryEntry>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub iterations: u64,
    pub end_iteration: u64,
    pub final_time: ErrorReport,
    pub space_time: ErrorReport,
    /// Mean total loss over consecutive `window`-iteration blocks.
    pub block_mean_loss: Vec<f64>,
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub mode: RetrainMode,
    pub lr: f64,
    pub start_iteration: u64,
    /// Error of the loaded checkpoint.
    pub initial: ErrorReport,
    pub phases: Vec<PhaseReport>,
    /// Final-time relative L2 error before and after.
    pub initial_relative_l2: f64,
    pub final_relative_l2: f64,
    pub degraded: bool,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdmReport {
    #[serde(flatten)]
    pub final_time: ErrorReport,
    pub evaluated_at_t: f64,
    pub space_time: ErrorReport,
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub cfl_limit: f64,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub final_time: Comparison,
    pub space_time: Comparison,
    pub evaluated_at_t: f64,
    /// Whether the finite-difference solution is closer to the reference
    /// than the network at the final time.
    pub fdm_more_accurate: bool,
    pub metadata: Metadata,
}

/// Mean total loss over consecutive full windows of the history.
pub fn block_means(history: &[HistoryEntry], window: usize) -> Vec<f64> {
    history
        .chunks_exact(window.max(1))
        .map(|c| c.iter().map(|e| e.total).sum::<f64>() / c.len() as f64)
        .collect()
}

fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("config.json");
    std::fs::write(&path, cfg.to_json()).map_err(|e| CliError::io(&path, e))
}

fn final_positions(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    Ok(cfg.grid()?.positions(&cfg.domain))
}

fn eval_grid(cfg: &ExperimentConfig) -> EvalGrid {
    let d = &cfg.domain;
    EvalGrid::uniform((d.t_min, d.t_max), cfg.eval.nt, (d.x_min, d.x_max), cfg.eval.nx)
}

fn exact_grid(cfg: &ExperimentConfig, grid: &EvalGrid) -> Array2<f64> {
    Array2::from_shape_fn(grid.shape(), |(i, j)| {
        exact_solution(&cfg.pde, grid.positions[j], grid.times[i])
    })
}

fn network_error(
    cfg: &ExperimentConfig,
    params: &Parameters,
) -> Result<(ErrorReport, ErrorReport, EvalGrid, Array2<f64>), CliError> {
    let arch = &cfg.architecture;
    let numeric = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());
    let slice = EvalGrid::slice(cfg.domain.t_max, final_positions(cfg)?);
    let u = predict_grid(arch, params, &slice.times, &slice.positions).map_err(|e| numeric(&e))?;
    let (_, final_time) = error_field(&u, &exact_grid(cfg, &slice), &slice).map_err(|e| numeric(&e))?;

    let grid = eval_grid(cfg);
    let field = predict_grid(arch, params, &grid.times, &grid.positions).map_err(|e| numeric(&e))?;
    let (_, space_time) = error_field(&field, &exact_grid(cfg, &grid), &grid).map_err(|e| numeric(&e))?;
    if !final_time.relative_l2.is_finite() || !space_time.relative_l2.is_finite() {
        return Err(CliError::Numerical("network predictions are not finite".into()));
    }
    Ok((final_time, space_time, grid, field))
}

fn log_progress(e: &HistoryEntry, end: u64) {
    if e.iteration % PROGRESS_EVERY == 0 || e.iteration + 1 == end {
        eprintln!(
            "iter {:>6}/{end}  lr {:.3e}  L {:.4e}  L_ic {:.3e}  L_bc {:.3e}  L_res {:.3e}  w ({:.3e}, {:.3e})",
            e.iteration, e.lr, e.total, e.ic, e.bc, e.res, e.w_ic, e.w_bc
        );
    }
}

/// Converts a training failure, saving the last good state when there is one.
fn training_failure(err: TrainError, cfg: &ExperimentConfig, out: &Path) -> CliError {
    match err {
        TrainError::NonFinite {
            iteration,
            reason,
            last_good,
        } => {
            let path = out.join("checkpoint_last_good.json");
            let ckpt = Checkpoint::from_state(
                &cfg.architecture,
                cfg.sampling.seed,
                &last_good,
                Metadata::now(last_good.wall_time_s),
            );
            let saved = match ckpt.save(&path) {
                Ok(()) => format!("; last good state saved to {}", path.display()),
                Err(e) => format!("; could not save last good state: {e}"),
            };
            CliError::Numerical(format!("training diverged at iteration {iteration}: {reason}{saved}"))
        }
        TrainError::Config(m) => CliError::Config(m),
        e @ TrainError::ArchitectureMismatch { .. } => CliError::Config(e.to_string()),
    }
}

fn write_state_artifacts(
    cfg: &ExperimentConfig,
    out: &Path,
    state: &TrainState,
    history: &[HistoryEntry],
    grid: &EvalGrid,
    field: &Array2<f64>,
) -> Result<(), CliError> {
    let ckpt = Checkpoint::from_state(&cfg.architecture, cfg.sampling.seed, state, Metadata::now(state.wall_time_s));
    ckpt.save(&out.join("checkpoint.json"))?;
    output::write_history(&out.join("loss_history.csv"), history)?;
    output::write_grid(&out.join("pinn_grid.csv"), &grid.times, &grid.positions, field)
}

/// Initial training from Xavier initialization.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainReport, CliError> {
    prepare(cfg, out)?;
    let problem = cfg.problem();
    let state = TrainState::initial(&problem, cfg.initial_weights());
    let end = cfg.iterations;
    let state = pinn::train_observed(state, &problem, &cfg.schedule, cfg.iterations, |e| log_progress(e, end))
        .map_err(|e| training_failure(e, cfg, out))?;

    let (final_time, space_time, grid, field) = network_error(cfg, &state.params)?;
    write_state_artifacts(cfg, out, &state, &state.history, &grid, &field)?;
    let report = TrainReport {
        final_time,
        evaluated_at_t: cfg.domain.t_max,
        space_time,
        iterations: state.iteration,
        seed: cfg.sampling.seed,
        final_loss: state.history.last().copied(),
        metadata: Metadata::now(state.wall_time_s),
    };
    output::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn check_architecture(ckpt: &Checkpoint, arch: &Architecture) -> Result<(), CliError> {
    if &ckpt.architecture != arch {
        return Err(CliError::Config(format!(
            "checkpoint architecture {:?} does not match configured {:?}",
            ckpt.architecture, arch
        )));
    }
    Ok(())
}

/// Retraining window for the block-mean loss summary.
pub const RETRAIN_WINDOW: u64 = 1000;

/// Continues from a checkpoint at constant learning rate, in one or more
/// phases. In reset mode the optimizer is reset at the start of every phase.
pub fn cmd_retrain(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<RetrainReport, CliError> {
    prepare(cfg, out)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    check_architecture(&ckpt, &cfg.architecture)?;
    let mode = if cfg.retrain.preserve_optimizer {
        if ckpt.adam.is_none() {
            return Err(CliError::Checkpoint(
                "checkpoint has no optimizer state, which --preserve-optimizer requires".into(),
            ));
        }
        RetrainMode::Preserve
    } else {
        RetrainMode::Reset
    };

    let problem = cfg.problem();
    let (initial, _, _, _) = network_error(cfg, &ckpt.params)?;
    let mut state = ckpt.to_state();
    let start_iteration = state.iteration;
    let mut phases = Vec::new();
    let mut last = None;
    for (phase, &iterations) in cfg.retrain.phases.iter().enumerate() {
        let before = state.history.len();
        let end = state.iteration + iterations;
        state = pinn::retrain_observed(state, &problem, cfg.retrain.lr, iterations, mode, |e| log_progress(e, end))
            .map_err(|e| training_failure(e, cfg, out))?;
        let (final_time, space_time, grid, field) = network_error(cfg, &state.params)?;
        phases.push(PhaseReport {
            phase: phase + 1,
            iterations,
            end_iteration: state.iteration,
            final_time,
            space_time,
            block_mean_loss: block_means(&state.history[before..], RETRAIN_WINDOW as usize),
            window: RETRAIN_WINDOW,
        });
        last = Some((grid, field));
    }
    let (grid, field) = match last {
        Some(v) => v,
        None => {
            let (_, _, grid, field) = network_error(cfg, &state.params)?;
            (grid, field)
        }
    };
    write_state_artifacts(cfg, out, &state, &state.history, &grid, &field)?;

    let final_relative_l2 = phases.last().map_or(initial.relative_l2, |p| p.final_time.relative_l2);
    let report = RetrainReport {
        mode,
        lr: cfg.retrain.lr,
        start_iteration,
        initial,
        initial_relative_l2: initial.relative_l2,
        final_relative_l2,
        degraded: final_relative_l2 > initial.relative_l2,
        phases,
        metadata: Metadata::now(state.wall_time_s),
    };
    let (final_time, space_time, _, _) = network_error(cfg, &state.params)?;
    output::write_json(
        &out.join("report.json"),
        &TrainReport {
            final_time,
            evaluated_at_t: cfg.domain.t_max,
            space_time,
            iterations: state.iteration,
            seed: cfg.sampling.seed,
            final_loss: state.history.last().copied(),
            metadata: Metadata::now(state.wall_time_s),
        },
    )?;
    output::write_json(&out.join("retrain_report.json"), &report)?;
    Ok(report)
}

fn solve_fdm(cfg: &ExperimentConfig) -> Result<Solution, CliError> {
    let grid = cfg.grid()?;
    fdm::solve(&cfg.pde, &cfg.domain, &grid).map_err(|e| match e {
        FdmError::Cfl { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    })
}

fn exact_on(cfg: &ExperimentConfig, times: &[f64], positions: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((times.len(), positions.len()), |(i, j)| {
        exact_solution(&cfg.pde, positions[j], times[i])
    })
}

/// Explicit finite-difference reference run.
pub fn cmd_fdm(cfg: &ExperimentConfig, out: &Path) -> Result<FdmReport, CliError> {
    prepare(cfg, out)?;
    let started = Instant::now();
    let sol = solve_fdm(cfg)?;
    let grid = cfg.grid()?;
    let numeric = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());

    let last = sol.times.len() - 1;
    let slice = EvalGrid::slice(sol.times[last], sol.positions.clone());
    let final_row = sol.values.slice(s![last..last + 1, ..]).to_owned();
    let exact_final = exact_on(cfg, &slice.times, &slice.positions);
    let (_, final_time) = error_field(&final_row, &exact_final, &slice).map_err(|e| numeric(&e))?;
    let whole = EvalGrid {
        times: sol.times.clone(),
        positions: sol.positions.clone(),
    };
    let (_, space_time) =
        error_field(&sol.values, &exact_on(cfg, &whole.times, &whole.positions), &whole).map_err(|e| numeric(&e))?;

    output::write_grid(&out.join("fdm_grid.csv"), &sol.times, &sol.positions, &sol.values)?;
    let report = FdmReport {
        final_time,
        evaluated_at_t: sol.times[last],
        space_time,
        nx: grid.nx,
        nt: grid.nt,
        dx: grid.dx,
        dt: grid.dt,
        cfl_limit: fdm::cfl_limit(&cfg.pde, grid.dx),
        metadata: Metadata::now(started.elapsed().as_secs_f64()),
    };
    output::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Rows of `values` at every `stride`-th index, columns likewise.
fn subsample(values: &Array2<f64>, row_stride: usize, col_stride: usize) -> Array2<f64> {
    values.slice(s![..;row_stride, ..;col_stride]).to_owned()
}

fn stride(fine: usize, coarse: usize, axis: &str) -> Result<usize, CliError> {
    let (f, c) = (fine - 1, coarse - 1);
    if c == 0 || f % c != 0 {
        return Err(CliError::Config(format!(
            "evaluation {axis} grid ({coarse} nodes) must be a subsampling of the finite-difference grid ({fine} nodes)"
        )));
    }
    Ok(f / c)
}

/// Three-way comparison of network, finite differences and reference.
pub fn cmd_compare(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<CompareReport, CliError> {
    prepare(cfg, out)?;
    let started = Instant::now();
    let ckpt = Checkpoint::load(checkpoint)?;
    check_architecture(&ckpt, &cfg.architecture)?;
    let grid = cfg.grid()?;
    let row_stride = stride(grid.nt + 1, cfg.eval.nt, "time")?;
    let col_stride = stride(grid.nx, cfg.eval.nx, "space")?;
    let sol = solve_fdm(cfg)?;
    let numeric = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());
    let arch = &cfg.architecture;

    let last = sol.times.len() - 1;
    let slice = EvalGrid::slice(sol.times[last], sol.positions.clone());
    let fdm_final = sol.values.slice(s![last..last + 1, ..]).to_owned();
    let pinn_final = predict_grid(arch, &ckpt.params, &slice.times, &slice.positions).map_err(|e| numeric(&e))?;
    let exact_final = exact_on(cfg, &slice.times, &slice.positions);
    let final_time = compare_all(&pinn_final, &fdm_final, &exact_final, &slice).map_err(|e| numeric(&e))?;

    let eval = EvalGrid {
        times: sol.times.iter().step_by(row_stride).copied().collect(),
        positions: sol.positions.iter().step_by(col_stride).copied().collect(),
    };
    let fdm_field = subsample(&sol.values, row_stride, col_stride);
    let pinn_field = predict_grid(arch, &ckpt.params, &eval.times, &eval.positions).map_err(|e| numeric(&e))?;
    let exact_field = exact_on(cfg, &eval.times, &eval.positions);
    let space_time = compare_all(&pinn_field, &fdm_field, &exact_field, &eval).map_err(|e| numeric(&e))?;

    let fields = [
        ("error_pinn_exact.csv", &pinn_field, &exact_field),
        ("error_fdm_exact.csv", &fdm_field, &exact_field),
        ("error_pinn_fdm.csv", &pinn_field, &fdm_field),
    ];
    for (name, a, b) in fields {
        let (abs, _) = error_field(a, b, &eval).map_err(|e| numeric(&e))?;
        output::write_grid(&out.join(name), &eval.times, &eval.positions, &abs)?;
    }
    output::write_columns(
        &out.join("final_profiles.csv"),
        &[
            ("x", &slice.positions),
            ("exact", exact_final.as_slice().expect("row")),
            ("fdm", fdm_final.as_slice().expect("row")),
            ("pinn", pinn_final.as_slice().expect("row")),
        ],
    )?;

    let report = CompareReport {
        fdm_more_accurate: final_time.exact_vs_fdm.relative_l2 < final_time.exact_vs_pinn.relative_l2,
        final_time,
        space_time,
        evaluated_at_t: sol.times[last],
        metadata: Metadata::now(started.elapsed().as_secs_f64()),
    };
    output::write_json(&out.join("comparison.json"), &report)?;
    Ok(report)
}
