//! Relative L2 error and absolute-error fields.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: approximation has {approx} values, reference has {exact}")]
    Length { approx: usize, exact: usize },
    #[error("shape mismatch: {approx:?} vs {exact:?}")]
    Shape {
        approx: (usize, usize),
        exact: (usize, usize),
    },
    #[error("axes do not match the field shape {shape:?} ({times} times, {positions} positions)")]
    Axes {
        shape: (usize, usize),
        times: usize,
        positions: usize,
    },
    #[error("empty input")]
    Empty,
    #[error("reference has zero norm; relative error is undefined")]
    ZeroNorm,
}

/// Summary of an approximation error over a set of evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub relative_l2: f64,
    pub max_abs_error: f64,
    /// `(t, x)` where the absolute error is largest (first occurrence).
    pub argmax_location: (f64, f64),
    pub n_points: usize,
}

/// Time and space coordinates of the rows and columns of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl EvalGrid {
    pub fn uniform(t: (f64, f64), nt: usize, x: (f64, f64), nx: usize) -> Self {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![lo];
            }
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        Self {
            times: axis(t, nt),
            positions: axis(x, nx),
        }
    }

    /// A single time level.
    pub fn slice(t: f64, positions: Vec<f64>) -> Self {
        Self {
            times: vec![t],
            positions,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.times.len(), self.positions.len())
    }
}

fn l2_norm(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |acc, v| acc + v * v).sqrt()
}

/// `‖approx − exact‖₂ / ‖exact‖₂`.
pub fn relative_l2(approx: &[f64], exact: &[f64]) -> Result<f64, MetricsError> {
    if approx.len() != exact.len() {
        return Err(MetricsError::Length {
            approx: approx.len(),
            exact: exact.len(),
        });
    }
    if exact.is_empty() {
        return Err(MetricsError::Empty);
    }
    let denom = l2_norm(exact.iter().copied());
    if denom == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok(l2_norm(approx.iter().zip(exact).map(|(a, e)| a - e)) / denom)
}

fn check_shapes(approx: &Array2<f64>, exact: &Array2<f64>, grid: &EvalGrid) -> Result<(), MetricsError> {
    if approx.dim() != exact.dim() {
        return Err(MetricsError::Shape {
            approx: approx.dim(),
            exact: exact.dim(),
        });
    }
    if grid.shape() != exact.dim() {
        return Err(MetricsError::Axes {
            shape: exact.dim(),
            times: grid.times.len(),
            positions: grid.positions.len(),
        });
    }
    if exact.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn report(diff: &Array2<f64>, reference_norm: f64, grid: &EvalGrid) -> ErrorReport {
    let mut max_abs = 0.0;
    let mut at = (grid.times[0], grid.positions[0]);
    for ((i, j), &d) in diff.indexed_iter() {
        if d.abs() > max_abs {
            max_abs = d.abs();
            at = (grid.times[i], grid.positions[j]);
        }
    }
    ErrorReport {
        relative_l2: l2_norm(diff.iter().copied()) / reference_norm,
        max_abs_error: max_abs,
        argmax_location: at,
        n_points: diff.len(),
    }
}

/// Pointwise `|approx − exact|` and its summary.
pub fn error_field(
    approx: &Array2<f64>,
    exact: &Array2<f64>,
    grid: &EvalGrid,
) -> Result<(Array2<f64>, ErrorReport), MetricsError> {
    check_shapes(approx, exact, grid)?;
    let norm = l2_norm(exact.iter().copied());
    if norm == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    let diff = approx - exact;
    let summary = report(&diff, norm, grid);
    Ok((diff.mapv(f64::abs), summary))
}

/// The three pairwise comparisons between PINN, FDM and the reference profile.
///
/// All three relative errors share the denominator `‖exact‖₂`, so
/// `pinn_vs_fdm ≤ exact_vs_pinn + exact_vs_fdm` holds exactly in real
/// arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub exact_vs_fdm: ErrorReport,
    pub exact_vs_pinn: ErrorReport,
    pub pinn_vs_fdm: ErrorReport,
}

pub fn compare_all(
    pinn: &Array2<f64>,
    fdm: &Array2<f64>,
    exact: &Array2<f64>,
    grid: &EvalGrid,
) -> Result<Comparison, MetricsError> {
    check_shapes(pinn, exact, grid)?;
    check_shapes(fdm, exact, grid)?;
    let norm = l2_norm(exact.iter().copied());
    if norm == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok(Comparison {
        exact_vs_fdm: report(&(fdm - exact), norm, grid),
        exact_vs_pinn: report(&(pinn - exact), norm, grid),
        pinn_vs_fdm: report(&(pinn - fdm), norm, grid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn relative_l2_values() {
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((relative_l2(&[1.0, 1.0], &[1.0, 2.0]).unwrap() - 0.44721).abs() < 1e-5);
        let e = [0.3, -1.2, 4.0];
        let a: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        assert_eq!(relative_l2(&a, &e).unwrap(), 1.0);
    }

    #[test]
    fn relative_l2_errors() {
        assert_eq!(relative_l2(&[1.0], &[0.0]), Err(MetricsError::ZeroNorm));
        assert!(matches!(relative_l2(&[1.0], &[1.0, 2.0]), Err(MetricsError::Length { .. })));
        assert_eq!(relative_l2(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn error_field_values() {
        let g = EvalGrid::slice(1.0, vec![0.0]);
        let (f, r) = error_field(&array![[0.3]], &array![[0.5]], &g).unwrap();
        assert!((f[[0, 0]] - 0.2).abs() < 1e-15);
        assert!((r.relative_l2 - 0.4).abs() < 1e-15);
        assert_eq!(r.n_points, 1);

        let grid = EvalGrid::uniform((0.0, 1.0), 2, (0.0, 1.0), 3);
        let m = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        let (f, r) = error_field(&m, &m, &grid).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        assert_eq!(r.relative_l2, 0.0);
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn argmax_location_is_reported() {
        let grid = EvalGrid::uniform((0.0, 1.0), 2, (0.0, 1.0), 3);
        let e = array![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let a = array![[1.0, 1.0, 1.0], [1.0, 0.5, 1.0]];
        let (_, r) = error_field(&a, &e, &grid).unwrap();
        assert_eq!(r.argmax_location, (1.0, 0.5));
        assert_eq!(r.max_abs_error, 0.5);
    }

    #[test]
    fn shape_checks() {
        let grid = EvalGrid::uniform((0.0, 1.0), 2, (0.0, 1.0), 2);
        let a = Array2::<f64>::ones((2, 2));
        let b = Array2::<f64>::ones((2, 3));
        assert!(matches!(error_field(&a, &b, &grid), Err(MetricsError::Shape { .. })));
        let grid3 = EvalGrid::uniform((0.0, 1.0), 3, (0.0, 1.0), 2);
        assert!(matches!(error_field(&a, &a, &grid3), Err(MetricsError::Axes { .. })));
        assert!(compare_all(&a, &b, &a, &grid).is_err());
    }

    #[test]
    fn compare_all_slots() {
        let grid = EvalGrid::slice(1.0, vec![0.0, 0.5, 1.0]);
        let e = array![[0.9, 0.5, 0.1]];
        let c = compare_all(&e, &e, &e, &grid).unwrap();
        assert_eq!(c.exact_vs_fdm.relative_l2, 0.0);
        assert_eq!(c.exact_vs_pinn.relative_l2, 0.0);
        assert_eq!(c.pinn_vs_fdm.relative_l2, 0.0);
    }

    fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn triangle_bound((a, b, e) in vecs()) {
            prop_assume!(l2_norm(e.iter().copied()) > 1e-6);
            let ne = l2_norm(e.iter().copied());
            let lhs = relative_l2(&a, &e).unwrap();
            let ab = l2_norm(a.iter().zip(&b).map(|(x, y)| x - y));
            let be = l2_norm(b.iter().zip(&e).map(|(x, y)| x - y));
            prop_assert!(lhs <= (ab + be) / ne * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn scale_invariant((a, _b, e) in vecs(), c in 0.01f64..100.0) {
            prop_assume!(l2_norm(e.iter().copied()) > 1e-6);
            let r = relative_l2(&a, &e).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
            let se: Vec<f64> = e.iter().map(|v| v * c).collect();
            let rs = relative_l2(&sa, &se).unwrap();
            prop_assert!((r - rs).abs() <= 1e-12 * r.max(1.0));
        }

        #[test]
        fn error_field_symmetric((a, b, _e) in vecs()) {
            let n = a.len();
            let grid = EvalGrid::slice(0.0, (0..n).map(|i| i as f64).collect());
            let am = Array2::from_shape_vec((1, n), a).unwrap();
            let bm = Array2::from_shape_vec((1, n), b).unwrap();
            prop_assume!(l2_norm(am.iter().copied()) > 0.0 && l2_norm(bm.iter().copied()) > 0.0);
            let (f1, _) = error_field(&am, &bm, &grid).unwrap();
            let (f2, _) = error_field(&bm, &am, &grid).unwrap();
            prop_assert_eq!(f1, f2);
        }
    }
}
