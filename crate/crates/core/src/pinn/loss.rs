//! Loss components and their parameter gradients.
//!
//! The production path runs on the batched tape in fixed-size blocks of
//! points; block results are reduced in block order, so values and gradients
//! do not depend on how many threads evaluated the blocks.
//!
//! [`loss_exprs`] builds the same losses on the scalar expression graph. It is
//! far slower and meant for cross-checking small networks.

use ndarray::Array2;
use rayon::prelude::*;

use super::{LossComponents, PinnError, PointSet};
use crate::autodiff::{Expr, Tape};
use crate::network::{self, Architecture, Parameters, TapeParams, BLOCK};
use crate::physics::{boundary_condition, initial_condition, residual_operator_expr, Domain, PdeParams};

/// Parameter gradients of each unweighted loss component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGradients {
    pub ic: Vec<f64>,
    pub bc: Vec<f64>,
    pub res: Vec<f64>,
}

impl ComponentGradients {
    /// `w_ic·∇L_ic + w_bc·∇L_bc + w_res·∇L_res`.
    pub fn combine(&self, w_ic: f64, w_bc: f64, w_res: f64) -> Vec<f64> {
        self.ic
            .iter()
            .zip(&self.bc)
            .zip(&self.res)
            .map(|((a, b), c)| w_ic * a + w_bc * b + w_res * c)
            .collect()
    }
}

/// Sum of squares over one block, and optionally its parameter gradient.
struct BlockResult {
    sum_sq: f64,
    grad: Option<Vec<f64>>,
}

fn check_finite(values: &Array2<f64>, points: &[(f64, f64)]) -> Result<(), PinnError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => {
            let (t, x) = points[i % points.len()];
            Err(PinnError::NonFiniteOutput { t, x })
        }
        None => Ok(()),
    }
}

fn data_block(
    arch: &Architecture,
    params: &Parameters,
    points: &[(f64, f64)],
    targets: &[f64],
    with_grad: bool,
) -> Result<BlockResult, PinnError> {
    let mut tape = Tape::new();
    let tp = TapeParams::record(&mut tape, arch, params);
    let u = tp.forward_values(&mut tape, points);
    check_finite(tape.value(u), points)?;
    let target = tape.constant(Array2::from_shape_vec((targets.len(), 1), targets.to_vec()).expect("column"));
    let diff = tape.sub(u, target);
    let ss = tape.sum_squares(diff);
    let grad = with_grad.then(|| tp.gradient(arch, &tape.backward(ss)));
    Ok(BlockResult {
        sum_sq: tape.scalar(ss),
        grad,
    })
}

fn residual_block(
    arch: &Architecture,
    params: &Parameters,
    pde: &PdeParams,
    points: &[(f64, f64)],
    with_grad: bool,
) -> Result<BlockResult, PinnError> {
    let n = points.len();
    let mut tape = Tape::new();
    let tp = TapeParams::record(&mut tape, arch, params);
    let jet = tp.forward_jet(&mut tape, points);
    check_finite(tape.value(jet), points)?;
    let u = tape.rows(jet, 0, n);
    let u_t = tape.rows(jet, n, n);
    let u_xx = tape.rows(jet, 3 * n, n);
    // r = u_t − D·u_xx − R·(u − u²)
    let diffusion = tape.scale(u_xx, pde.diffusion);
    let u_sq = tape.mul(u, u);
    let logistic = tape.sub(u, u_sq);
    let reaction = tape.scale(logistic, pde.reaction);
    let r = tape.sub(u_t, diffusion);
    let r = tape.sub(r, reaction);
    let ss = tape.sum_squares(r);
    let grad = with_grad.then(|| tp.gradient(arch, &tape.backward(ss)));
    Ok(BlockResult {
        sum_sq: tape.scalar(ss),
        grad,
    })
}

/// Mean of the block sums and of the block gradients, reduced in block order.
fn reduce(blocks: Vec<BlockResult>, count: usize, n_params: usize) -> (f64, Option<Vec<f64>>) {
    let scale = 1.0 / count as f64;
    let mut sum = 0.0;
    let mut grad: Option<Vec<f64>> = None;
    for b in blocks {
        sum += b.sum_sq;
        if let Some(g) = b.grad {
            let acc = grad.get_or_insert_with(|| vec![0.0; n_params]);
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
        }
    }
    if let Some(g) = grad.as_mut() {
        g.iter_mut().for_each(|v| *v *= scale);
    }
    (sum * scale, grad)
}

fn data_term(
    arch: &Architecture,
    params: &Parameters,
    points: &[(f64, f64)],
    targets: &[f64],
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>), PinnError> {
    let blocks = points
        .par_chunks(BLOCK)
        .zip(targets.par_chunks(BLOCK))
        .map(|(p, y)| data_block(arch, params, p, y, with_grad))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(blocks, points.len(), arch.param_count()))
}

fn residual_term(
    arch: &Architecture,
    params: &Parameters,
    pde: &PdeParams,
    points: &[(f64, f64)],
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>), PinnError> {
    let blocks = points
        .par_chunks(BLOCK)
        .map(|p| residual_block(arch, params, pde, p, with_grad))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(blocks, points.len(), arch.param_count()))
}

fn data_points(pde: &PdeParams, domain: &Domain, points: &PointSet) -> [(Vec<(f64, f64)>, Vec<f64>); 2] {
    let ic_pts = points.ic.iter().map(|&x| (domain.t_min, x)).collect();
    let ic_targets = points.ic.iter().map(|&x| initial_condition(pde, x)).collect();
    let bc_pts = points
        .bc
        .iter()
        .map(|&(side, t)| {
            let x = match side {
                crate::physics::Side::Left => domain.x_min,
                crate::physics::Side::Right => domain.x_max,
            };
            (t, x)
        })
        .collect();
    let bc_targets = points
        .bc
        .iter()
        .map(|&(side, t)| boundary_condition(pde, domain, side, t))
        .collect();
    [(ic_pts, ic_targets), (bc_pts, bc_targets)]
}

fn evaluate(
    arch: &Architecture,
    params: &Parameters,
    pde: &PdeParams,
    domain: &Domain,
    points: &PointSet,
    with_grad: bool,
) -> Result<(LossComponents, Option<ComponentGradients>), PinnError> {
    arch.validate()?;
    arch.check(params)?;
    if points.collocation.is_empty() || points.ic.is_empty() || points.bc.is_empty() {
        return Err(PinnError::EmptyPointSet);
    }
    let [(ic_pts, ic_y), (bc_pts, bc_y)] = data_points(pde, domain, points);
    let (ic, g_ic) = data_term(arch, params, &ic_pts, &ic_y, with_grad)?;
    let (bc, g_bc) = data_term(arch, params, &bc_pts, &bc_y, with_grad)?;
    let (res, g_res) = residual_term(arch, params, pde, &points.collocation, with_grad)?;
    let grads = match (g_ic, g_bc, g_res) {
        (Some(ic), Some(bc), Some(res)) => Some(ComponentGradients { ic, bc, res }),
        _ => None,
    };
    Ok((LossComponents { ic, bc, res }, grads))
}

/// `L_ic`, `L_bc` and `L_res` as mean squared errors over `points`.
pub fn loss_components(
    arch: &Architecture,
    params: &Parameters,
    pde: &PdeParams,
    domain: &Domain,
    points: &PointSet,
) -> Result<LossComponents, PinnError> {
    Ok(evaluate(arch, params, pde, domain, points, false)?.0)
}

/// Loss components together with the parameter gradient of each.
pub fn loss_and_gradients(
    arch: &Architecture,
    params: &Parameters,
    pde: &PdeParams,
    domain: &Domain,
    points: &PointSet,
) -> Result<(LossComponents, ComponentGradients), PinnError> {
    let (c, g) = evaluate(arch, params, pde, domain, points, true)?;
    Ok((c, g.expect("gradients requested")))
}

/// Scalar-graph losses `(L_ic, L_bc, L_res)`.
///
/// Each collocation point gets its own `t[k]`, `x[k]` variables so that
/// `u_t` and `u_xx` can be taken symbolically; the caller binds those along
/// with `theta`. Returns the three expressions and the bindings for the point
/// coordinates.
pub fn loss_exprs<'g>(
    arch: &Architecture,
    theta: &[Expr<'g>],
    pde: &PdeParams,
    domain: &Domain,
    points: &PointSet,
) -> Result<([Expr<'g>; 3], crate::autodiff::Bindings), PinnError> {
    let graph = theta
        .first()
        .map(|e| e.graph())
        .ok_or(PinnError::EmptyPointSet)?;
    let mut bindings = crate::autodiff::Bindings::new();
    let [(ic_pts, ic_y), (bc_pts, bc_y)] = data_points(pde, domain, points);

    let mse = |terms: Vec<Expr<'g>>| -> Expr<'g> {
        let n = terms.len() as f64;
        graph.sum(terms) * (1.0 / n)
    };
    let data = |pts: &[(f64, f64)], ys: &[f64]| -> Result<Expr<'g>, PinnError> {
        let terms = pts
            .iter()
            .zip(ys)
            .map(|(&(t, x), &y)| {
                let u = network::forward(arch, theta, graph.constant(t), graph.constant(x))?;
                Ok((u - y).square())
            })
            .collect::<Result<Vec<_>, PinnError>>()?;
        Ok(mse(terms))
    };
    let l_ic = data(&ic_pts, &ic_y)?;
    let l_bc = data(&bc_pts, &bc_y)?;

    let mut res_terms = Vec::with_capacity(points.collocation.len());
    for (k, &(tv, xv)) in points.collocation.iter().enumerate() {
        let (tn, xn) = (format!("t[{k}]"), format!("x[{k}]"));
        let (t, x) = (graph.var(&tn), graph.var(&xn));
        bindings.set(tn, tv);
        bindings.set(xn, xv);
        let u = network::forward(arch, theta, t, x)?;
        let u_t = graph.derivative(u, t)?;
        let u_xx = graph.second_derivative_expr(u, x)?;
        res_terms.push(residual_operator_expr(pde, u_t, u_xx, u).square());
    }
    Ok(([l_ic, l_bc, mse(res_terms)], bindings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::physics::Side;

    fn small_points() -> PointSet {
        PointSet {
            collocation: vec![(0.1, 0.2), (0.5, 0.5), (0.9, 0.3), (0.3, 0.8)],
            ic: vec![0.0, 0.25, 0.6],
            bc: vec![(Side::Left, 0.2), (Side::Right, 0.7)],
        }
    }

    /// Output layer bias only: u ≡ c.
    fn constant_net(arch: &Architecture, c: f64) -> Parameters {
        let mut p = Parameters::zeros(arch);
        let n = p.len();
        p.0[n - 1] = c;
        p
    }

    #[test]
    fn constant_half_network_residual() {
        let arch = Architecture::tanh(2, 4);
        let p = constant_net(&arch, 0.5);
        let c = loss_components(&arch, &p, &PdeParams::default(), &Domain::default(), &small_points()).unwrap();
        assert!((c.res - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn zero_network_losses() {
        let arch = Architecture::tanh(2, 4);
        let pde = PdeParams::default();
        let pts = small_points();
        let c = loss_components(&arch, &Parameters::zeros(&arch), &pde, &Domain::default(), &pts).unwrap();
        assert_eq!(c.res, 0.0);
        let brute = pts.ic.iter().map(|&x| initial_condition(&pde, x).powi(2)).sum::<f64>() / 3.0;
        assert!((c.ic - brute).abs() < 1e-15);
        assert!(c.ic > 0.0 && c.ic < 0.25);
    }

    #[test]
    fn batched_and_scalar_routes_agree() {
        let arch = Architecture::tanh(2, 5);
        let p = crate::network::xavier_init(&arch, 11);
        let pde = PdeParams::default();
        let d = Domain::default();
        let pts = small_points();
        let (c, grads) = loss_and_gradients(&arch, &p, &pde, &d, &pts).unwrap();

        let g = Graph::new();
        let (theta, mut b) = crate::network::bind_parameters(&g, &p);
        let ([e_ic, e_bc, e_res], coords) = loss_exprs(&arch, &theta, &pde, &d, &pts).unwrap();
        for k in 0..pts.collocation.len() {
            for name in [format!("t[{k}]"), format!("x[{k}]")] {
                b.set(name.clone(), coords.get(&name).unwrap());
            }
        }
        for (e, v, gv) in [(e_ic, c.ic, &grads.ic), (e_bc, c.bc, &grads.bc), (e_res, c.res, &grads.res)] {
            assert!((g.evaluate(e, &b).unwrap() - v).abs() < 1e-14 * v.abs().max(1.0));
            let sg = g.grad(e, &theta, &b).unwrap().values();
            for (i, (a, s)) in gv.iter().zip(&sg).enumerate() {
                assert!((a - s).abs() < 1e-12 * s.abs().max(1e-3), "param {i}: {a} vs {s}");
            }
        }
    }

    #[test]
    fn reports_length_mismatch_and_empty_sets() {
        let arch = Architecture::tanh(2, 4);
        let short = Parameters(vec![0.0; 3]);
        let pde = PdeParams::default();
        let d = Domain::default();
        assert!(matches!(
            loss_components(&arch, &short, &pde, &d, &small_points()),
            Err(PinnError::Network(_))
        ));
        let mut empty = small_points();
        empty.collocation.clear();
        assert!(matches!(
            loss_components(&arch, &Parameters::zeros(&arch), &pde, &d, &empty),
            Err(PinnError::EmptyPointSet)
        ));
    }

    #[test]
    fn non_finite_output_names_the_point() {
        let arch = Architecture::tanh(1, 2);
        let mut p = Parameters::zeros(&arch);
        let n = p.len();
        p.0[n - 1] = f64::INFINITY;
        let err = loss_components(&arch, &p, &PdeParams::default(), &Domain::default(), &small_points()).unwrap_err();
        assert!(matches!(err, PinnError::NonFiniteOutput { .. }));
    }

    #[test]
    fn permutation_invariant() {
        let arch = Architecture::tanh(2, 6);
        let p = crate::network::xavier_init(&arch, 5);
        let pde = PdeParams::default();
        let d = Domain::default();
        let cfg = super::super::SamplingConfig {
            n_collocation: 700,
            n_ic: 300,
            n_bc_per_side: 300,
            ..Default::default()
        };
        let pts = super::super::sample_points(&cfg, &d, 0);
        let mut rev = pts.clone();
        rev.collocation.reverse();
        rev.ic.reverse();
        rev.bc.reverse();
        let a = loss_components(&arch, &p, &pde, &d, &pts).unwrap();
        let b = loss_components(&arch, &p, &pde, &d, &rev).unwrap();
        for (x, y) in [(a.ic, b.ic), (a.bc, b.bc), (a.res, b.res)] {
            assert!((x - y).abs() <= 1e-13 * x.abs());
        }
    }
}
