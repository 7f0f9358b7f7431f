//! CSV and JSON writers. Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use fisher_pinn::pinn::HistoryEntry;
use ndarray::Array2;
use serde::Serialize;

use crate::CliError;

/// Every `HISTORY_STRIDE`-th iteration goes into the loss-history file, plus
/// the last one.
pub const HISTORY_STRIDE: u64 = 10;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write(path: &Path, text: String) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write(path, s)
}

/// Wide layout: header `t,<x_0>,…`, then one row per time level.
pub fn grid_csv(times: &[f64], positions: &[f64], values: &Array2<f64>) -> String {
    let mut s = String::from("t");
    for &x in positions {
        let _ = write!(s, ",{}", num(x));
    }
    s.push('\n');
    for (row, &t) in values.outer_iter().zip(times) {
        s.push_str(&num(t));
        for &v in row {
            s.push(',');
            s.push_str(&num(v));
        }
        s.push('\n');
    }
    s
}

pub fn write_grid(path: &Path, times: &[f64], positions: &[f64], values: &Array2<f64>) -> Result<(), CliError> {
    write(path, grid_csv(times, positions, values))
}

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut s = String::from("iteration,lr,L,L_IC,L_BC,L_Res,w_ic,w_bc\n");
    let last = history.last().map(|e| e.iteration);
    for e in history
        .iter()
        .filter(|e| e.iteration % HISTORY_STRIDE == 0 || Some(e.iteration) == last)
    {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.iteration,
            num(e.lr),
            num(e.total),
            num(e.ic),
            num(e.bc),
            num(e.res),
            num(e.w_ic),
            num(e.w_bc)
        );
    }
    s
}

pub fn write_history(path: &Path, history: &[HistoryEntry]) -> Result<(), CliError> {
    write(path, history_csv(history))
}

/// Named columns of equal length.
pub fn write_columns(path: &Path, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
    let header: Vec<&str> = columns.iter().map(|(name, _)| *name).collect();
    let mut s = header.join(",");
    s.push('\n');
    let n = columns.first().map_or(0, |(_, c)| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|(_, c)| num(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn numbers_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn grid_layout() {
        let csv = grid_csv(&[0.0, 1.0], &[0.0, 0.5, 1.0], &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
        assert!(lines[0].starts_with("t,"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn history_is_downsampled_but_keeps_the_last_row() {
        let h: Vec<HistoryEntry> = (0..25)
            .map(|k| HistoryEntry {
                iteration: k,
                lr: 1e-3,
                total: 1.0,
                ic: 0.0,
                bc: 0.0,
                res: 1.0,
                w_ic: 1.0,
                w_bc: 1.0,
            })
            .collect();
        let csv = history_csv(&h);
        let its: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(its, ["0", "10", "20", "24"]);
    }
}
