//! Scalar expression graphs with symbolic reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operand of a node has a
//! smaller index than the node itself, so the arena order is a topological
//! order and the graph is acyclic by construction.
//!
//! Derivatives come in two flavours:
//!
//! * [`Graph::grad`] runs a numeric reverse sweep and returns plain values.
//! * [`Graph::derivative`] builds the derivative as *new nodes* in the same
//!   graph. The result is an ordinary [`Expr`], so it can be differentiated
//!   again. This is what lets a loss contain `u_t` and `u_xx` and still be
//!   differentiated with respect to the network parameters.
//!
//! ```
//! use fisher_pinn::autodiff::{Bindings, Graph};
//!
//! let g = Graph::new();
//! let x = g.var("x");
//! let y = x * x * x;
//! let b = Bindings::new().with("x", 2.0);
//! assert_eq!(g.second_derivative(y, x, &b).unwrap(), 12.0);
//! ```

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::AutodiffError;

/// Index of a node inside its graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(u32),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    /// Power with a constant real exponent.
    Pow(NodeId, f64),
}

impl Op {
    fn operands(&self) -> (Option<NodeId>, Option<NodeId>) {
        match *self {
            Op::Const(_) | Op::Var(_) => (None, None),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => (Some(a), Some(b)),
            Op::Neg(a) | Op::Tanh(a) | Op::Exp(a) | Op::Pow(a, _) => (Some(a), None),
        }
    }
}

#[derive(Default)]
struct Arena {
    ops: Vec<Op>,
    var_names: Vec<String>,
    var_nodes: Vec<NodeId>,
    by_name: HashMap<String, u32>,
}

/// Append-only expression arena. Construction goes through `&self` so that
/// nested calls like `g.mul(x, g.tanh(x))` compile; freeze the graph with
/// [`Graph::freeze`] to share it across threads.
#[derive(Default)]
pub struct Graph {
    arena: RefCell<Arena>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Expr<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl fmt::Debug for Expr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self.id.0)
    }
}

impl<'g> Expr<'g> {
    pub fn id(self) -> NodeId {
        self.id
    }

    pub fn graph(self) -> &'g Graph {
        self.graph
    }

    pub fn tanh(self) -> Self {
        self.graph.unary(self, Op::Tanh(self.id))
    }

    pub fn exp(self) -> Self {
        self.graph.unary(self, Op::Exp(self.id))
    }

    pub fn powf(self, exponent: f64) -> Self {
        self.graph.unary(self, Op::Pow(self.id, exponent))
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// Constant value of this node, if it is a constant.
    pub fn as_constant(self) -> Option<f64> {
        match self.graph.op(self.id) {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }
}

/// Values for the named variables of a graph.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    values: HashMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// First derivatives keyed by variable name, in the order they were requested.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    entries: Vec<(String, f64)>,
}

impl Gradient {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), *v))
    }

    /// Derivative values in request order.
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, v)| v).collect()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.arena.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn op(&self, id: NodeId) -> Op {
        self.arena.borrow().ops[id.index()]
    }

    fn push(&self, op: Op) -> NodeId {
        let mut arena = self.arena.borrow_mut();
        let id = NodeId(arena.ops.len() as u32);
        arena.ops.push(op);
        id
    }

    fn wrap(&self, id: NodeId) -> Expr<'_> {
        Expr { graph: self, id }
    }

    /// Named variable. Declaring the same name twice returns the same node.
    pub fn var(&self, name: &str) -> Expr<'_> {
        if let Some(&v) = self.arena.borrow().by_name.get(name) {
            let id = self.arena.borrow().var_nodes[v as usize];
            return self.wrap(id);
        }
        let v = {
            let mut arena = self.arena.borrow_mut();
            let v = arena.var_names.len() as u32;
            arena.var_names.push(name.to_owned());
            arena.by_name.insert(name.to_owned(), v);
            v
        };
        let id = self.push(Op::Var(v));
        self.arena.borrow_mut().var_nodes.push(id);
        self.wrap(id)
    }

    pub fn constant(&self, value: f64) -> Expr<'_> {
        self.wrap(self.push(Op::Const(value)))
    }

    fn unary<'g>(&'g self, a: Expr<'g>, op: Op) -> Expr<'g> {
        self.check_owner(a);
        if let Some(c) = a.as_constant() {
            let folded = match op {
                Op::Neg(_) => -c,
                Op::Tanh(_) => c.tanh(),
                Op::Exp(_) => c.exp(),
                Op::Pow(_, p) => c.powf(p),
                _ => unreachable!("not a unary op"),
            };
            return self.constant(folded);
        }
        if let Op::Pow(_, p) = op {
            if p == 1.0 {
                return a;
            }
            if p == 0.0 {
                return self.constant(1.0);
            }
        }
        self.wrap(self.push(op))
    }

    fn check_owner(&self, a: Expr<'_>) {
        assert!(
            std::ptr::eq(self, a.graph),
            "expression belongs to a different graph"
        );
    }

    pub fn add<'g>(&'g self, a: Expr<'g>, b: Expr<'g>) -> Expr<'g> {
        self.check_owner(a);
        self.check_owner(b);
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => self.constant(x + y),
            (Some(x), None) if x == 0.0 => b,
            (None, Some(y)) if y == 0.0 => a,
            _ => self.wrap(self.push(Op::Add(a.id, b.id))),
        }
    }

    pub fn sub<'g>(&'g self, a: Expr<'g>, b: Expr<'g>) -> Expr<'g> {
        self.check_owner(a);
        self.check_owner(b);
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => self.constant(x - y),
            (Some(x), None) if x == 0.0 => self.neg(b),
            (None, Some(y)) if y == 0.0 => a,
            _ => self.wrap(self.push(Op::Sub(a.id, b.id))),
        }
    }

    pub fn mul<'g>(&'g self, a: Expr<'g>, b: Expr<'g>) -> Expr<'g> {
        self.check_owner(a);
        self.check_owner(b);
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => self.constant(x * y),
            (Some(x), None) | (None, Some(x)) if x == 0.0 => self.constant(0.0),
            (Some(x), None) if x == 1.0 => b,
            (None, Some(y)) if y == 1.0 => a,
            _ => self.wrap(self.push(Op::Mul(a.id, b.id))),
        }
    }

    pub fn div<'g>(&'g self, a: Expr<'g>, b: Expr<'g>) -> Expr<'g> {
        self.check_owner(a);
        self.check_owner(b);
        match (a.as_constant(), b.as_constant()) {
            (Some(x), Some(y)) => self.constant(x / y),
            (Some(x), None) if x == 0.0 => self.constant(0.0),
            (None, Some(y)) if y == 1.0 => a,
            _ => self.wrap(self.push(Op::Div(a.id, b.id))),
        }
    }

    pub fn neg<'g>(&'g self, a: Expr<'g>) -> Expr<'g> {
        self.unary(a, Op::Neg(a.id))
    }

    pub fn tanh<'g>(&'g self, a: Expr<'g>) -> Expr<'g> {
        a.tanh()
    }

    pub fn exp<'g>(&'g self, a: Expr<'g>) -> Expr<'g> {
        a.exp()
    }

    pub fn powf<'g>(&'g self, a: Expr<'g>, exponent: f64) -> Expr<'g> {
        a.powf(exponent)
    }

    /// Sum of a list of expressions, left to right. Empty sums are zero.
    pub fn sum<'g>(&'g self, terms: impl IntoIterator<Item = Expr<'g>>) -> Expr<'g> {
        terms
            .into_iter()
            .reduce(|acc, t| self.add(acc, t))
            .unwrap_or_else(|| self.constant(0.0))
    }

    /// Snapshot of the nodes built so far; the snapshot is `Sync`.
    pub fn freeze(&self) -> FrozenGraph {
        let arena = self.arena.borrow();
        FrozenGraph {
            ops: arena.ops.clone(),
            var_names: arena.var_names.clone(),
        }
    }

    pub fn evaluate(&self, expr: Expr<'_>, bindings: &Bindings) -> Result<f64, AutodiffError> {
        self.check_owner(expr);
        let arena = self.arena.borrow();
        let values = forward_values(&arena.ops, &arena.var_names, expr.id, bindings)?;
        Ok(values[expr.id.index()])
    }

    /// Numeric reverse sweep. Every variable in `wrt` gets an entry, zero if
    /// `expr` does not depend on it.
    pub fn grad(
        &self,
        expr: Expr<'_>,
        wrt: &[Expr<'_>],
        bindings: &Bindings,
    ) -> Result<Gradient, AutodiffError> {
        self.check_owner(expr);
        let arena = self.arena.borrow();
        let mut vars = Vec::with_capacity(wrt.len());
        for &w in wrt {
            self.check_owner(w);
            match arena.ops[w.id.index()] {
                Op::Var(v) => vars.push((w.id, arena.var_names[v as usize].clone())),
                _ => return Err(AutodiffError::NotAVariable { node: w.id.index() }),
            }
        }
        let values = forward_values(&arena.ops, &arena.var_names, expr.id, bindings)?;
        let adjoints = reverse_values(&arena.ops, &values, expr.id);
        let entries = vars
            .into_iter()
            .map(|(id, name)| (name, adjoints[id.index()]))
            .collect();
        Ok(Gradient { entries })
    }

    /// Builds `∂expr/∂wrt` as a new expression in this graph.
    pub fn derivative<'g>(
        &'g self,
        expr: Expr<'g>,
        wrt: Expr<'g>,
    ) -> Result<Expr<'g>, AutodiffError> {
        self.check_owner(expr);
        self.check_owner(wrt);
        if !matches!(self.op(wrt.id), Op::Var(_)) {
            return Err(AutodiffError::NotAVariable {
                node: wrt.id.index(),
            });
        }
        if wrt.id > expr.id {
            return Ok(self.constant(0.0));
        }

        // Restrict the sweep to nodes that are both reachable from `expr`
        // and depend on `wrt`; everything else has a zero contribution.
        let top = expr.id.index();
        let ops: Vec<Op> = self.arena.borrow().ops[..=top].to_vec();
        let reachable = reachable_from(&ops, expr.id);
        let mut depends = vec![false; top + 1];
        depends[wrt.id.index()] = true;
        for i in wrt.id.index()..=top {
            if !reachable[i] {
                continue;
            }
            let (a, b) = ops[i].operands();
            depends[i] |= a.is_some_and(|a| depends[a.index()])
                || b.is_some_and(|b| depends[b.index()]);
        }
        if !depends[top] {
            return Ok(self.constant(0.0));
        }

        let mut adjoint: Vec<Option<Expr<'g>>> = vec![None; top + 1];
        adjoint[top] = Some(self.constant(1.0));
        let accumulate = |slot: &mut Option<Expr<'g>>, term: Expr<'g>| {
            *slot = Some(match *slot {
                Some(acc) => self.add(acc, term),
                None => term,
            });
        };

        for i in (wrt.id.index()..=top).rev() {
            if !depends[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            let node = self.wrap(NodeId(i as u32));
            match ops[i] {
                Op::Const(_) | Op::Var(_) => {}
                Op::Add(a, b) => {
                    if depends[a.index()] {
                        accumulate(&mut adjoint[a.index()], g);
                    }
                    if depends[b.index()] {
                        accumulate(&mut adjoint[b.index()], g);
                    }
                }
                Op::Sub(a, b) => {
                    if depends[a.index()] {
                        accumulate(&mut adjoint[a.index()], g);
                    }
                    if depends[b.index()] {
                        accumulate(&mut adjoint[b.index()], self.neg(g));
                    }
                }
                Op::Mul(a, b) => {
                    if depends[a.index()] {
                        accumulate(&mut adjoint[a.index()], self.mul(g, self.wrap(b)));
                    }
                    if depends[b.index()] {
                        accumulate(&mut adjoint[b.index()], self.mul(g, self.wrap(a)));
                    }
                }
                Op::Div(a, b) => {
                    let denom = self.wrap(b);
                    if depends[a.index()] {
                        accumulate(&mut adjoint[a.index()], self.div(g, denom));
                    }
                    if depends[b.index()] {
                        // d(a/b)/db = -(a/b)/b
                        let term = self.neg(self.div(self.mul(g, node), denom));
                        accumulate(&mut adjoint[b.index()], term);
                    }
                }
                Op::Neg(a) => accumulate(&mut adjoint[a.index()], self.neg(g)),
                Op::Tanh(a) => {
                    let slope = self.sub(self.constant(1.0), self.mul(node, node));
                    accumulate(&mut adjoint[a.index()], self.mul(g, slope));
                }
                Op::Exp(a) => accumulate(&mut adjoint[a.index()], self.mul(g, node)),
                Op::Pow(a, p) => {
                    let slope = self.mul(self.constant(p), self.wrap(a).powf(p - 1.0));
                    accumulate(&mut adjoint[a.index()], self.mul(g, slope));
                }
            }
        }
        Ok(adjoint[wrt.id.index()].unwrap_or_else(|| self.constant(0.0)))
    }

    /// `∂²expr/∂wrt²` as an expression.
    pub fn second_derivative_expr<'g>(
        &'g self,
        expr: Expr<'g>,
        wrt: Expr<'g>,
    ) -> Result<Expr<'g>, AutodiffError> {
        let first = self.derivative(expr, wrt)?;
        self.derivative(first, wrt)
    }

    pub fn second_derivative(
        &self,
        expr: Expr<'_>,
        wrt: Expr<'_>,
        bindings: &Bindings,
    ) -> Result<f64, AutodiffError> {
        let d2 = self.second_derivative_expr(expr, wrt)?;
        self.evaluate(d2, bindings)
    }
}

/// Immutable copy of a graph, safe to evaluate from many threads.
#[derive(Clone, Debug)]
pub struct FrozenGraph {
    ops: Vec<Op>,
    var_names: Vec<String>,
}

impl FrozenGraph {
    pub fn evaluate(&self, node: NodeId, bindings: &Bindings) -> Result<f64, AutodiffError> {
        let values = forward_values(&self.ops, &self.var_names, node, bindings)?;
        Ok(values[node.index()])
    }

    /// Reverse sweep returning the derivative of `node` with respect to every
    /// variable of the graph, keyed by name.
    pub fn grad_all(&self, node: NodeId, bindings: &Bindings) -> Result<Gradient, AutodiffError> {
        let values = forward_values(&self.ops, &self.var_names, node, bindings)?;
        let adjoints = reverse_values(&self.ops, &values, node);
        let entries = self
            .ops
            .iter()
            .enumerate()
            .filter_map(|(i, op)| match op {
                Op::Var(v) => Some((self.var_names[*v as usize].clone(), adjoints[i])),
                _ => None,
            })
            .collect();
        Ok(Gradient { entries })
    }
}

fn reachable_from(ops: &[Op], root: NodeId) -> Vec<bool> {
    let mut seen = vec![false; root.index() + 1];
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if std::mem::replace(&mut seen[id.index()], true) {
            continue;
        }
        let (a, b) = ops[id.index()].operands();
        stack.extend(a);
        stack.extend(b);
    }
    seen
}

/// Values of every node reachable from `root`; unreachable entries are NaN.
fn forward_values(
    ops: &[Op],
    var_names: &[String],
    root: NodeId,
    bindings: &Bindings,
) -> Result<Vec<f64>, AutodiffError> {
    let reachable = reachable_from(ops, root);
    let mut values = vec![f64::NAN; root.index() + 1];
    for (i, op) in ops[..=root.index()].iter().enumerate() {
        if !reachable[i] {
            continue;
        }
        let v = |n: NodeId| values[n.index()];
        values[i] = match *op {
            Op::Const(c) => c,
            Op::Var(k) => {
                let name = &var_names[k as usize];
                bindings
                    .get(name)
                    .ok_or_else(|| AutodiffError::UnboundVariable(name.clone()))?
            }
            Op::Add(a, b) => v(a) + v(b),
            Op::Sub(a, b) => v(a) - v(b),
            Op::Mul(a, b) => v(a) * v(b),
            Op::Div(a, b) => v(a) / v(b),
            Op::Neg(a) => -v(a),
            Op::Tanh(a) => v(a).tanh(),
            Op::Exp(a) => v(a).exp(),
            Op::Pow(a, p) => v(a).powf(p),
        };
    }
    Ok(values)
}

fn reverse_values(ops: &[Op], values: &[f64], root: NodeId) -> Vec<f64> {
    let mut adj = vec![0.0; values.len()];
    adj[root.index()] = 1.0;
    for i in (0..=root.index()).rev() {
        let g = adj[i];
        if g == 0.0 {
            continue;
        }
        let out = values[i];
        match ops[i] {
            Op::Const(_) | Op::Var(_) => {}
            Op::Add(a, b) => {
                adj[a.index()] += g;
                adj[b.index()] += g;
            }
            Op::Sub(a, b) => {
                adj[a.index()] += g;
                adj[b.index()] -= g;
            }
            Op::Mul(a, b) => {
                let (va, vb) = (values[a.index()], values[b.index()]);
                adj[a.index()] += g * vb;
                adj[b.index()] += g * va;
            }
            Op::Div(a, b) => {
                let vb = values[b.index()];
                adj[a.index()] += g / vb;
                adj[b.index()] -= g * out / vb;
            }
            Op::Neg(a) => adj[a.index()] -= g,
            Op::Tanh(a) => adj[a.index()] += g * (1.0 - out * out),
            Op::Exp(a) => adj[a.index()] += g * out,
            Op::Pow(a, p) => adj[a.index()] += g * p * values[a.index()].powf(p - 1.0),
        }
    }
    adj
}

impl<'g> Add for Expr<'g> {
    type Output = Expr<'g>;
    fn add(self, rhs: Self) -> Self {
        self.graph.add(self, rhs)
    }
}

impl<'g> Sub for Expr<'g> {
    type Output = Expr<'g>;
    fn sub(self, rhs: Self) -> Self {
        self.graph.sub(self, rhs)
    }
}

impl<'g> Mul for Expr<'g> {
    type Output = Expr<'g>;
    fn mul(self, rhs: Self) -> Self {
        self.graph.mul(self, rhs)
    }
}

impl<'g> Div for Expr<'g> {
    type Output = Expr<'g>;
    fn div(self, rhs: Self) -> Self {
        self.graph.div(self, rhs)
    }
}

impl<'g> Neg for Expr<'g> {
    type Output = Expr<'g>;
    fn neg(self) -> Self {
        self.graph.neg(self)
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $method:ident),*) => {$(
        impl<'g> $tr<f64> for Expr<'g> {
            type Output = Expr<'g>;
            fn $method(self, rhs: f64) -> Expr<'g> {
                let c = self.graph.constant(rhs);
                self.graph.$method(self, c)
            }
        }
        impl<'g> $tr<Expr<'g>> for f64 {
            type Output = Expr<'g>;
            fn $method(self, rhs: Expr<'g>) -> Expr<'g> {
                let c = rhs.graph.constant(self);
                rhs.graph.$method(c, rhs)
            }
        }
    )*};
}

scalar_ops!(Add add, Sub sub, Mul mul, Div div);
