//! Batched reverse-mode tape over dense matrices.
//!
//! Rows are samples, columns are features. Values are computed eagerly as ops
//! are recorded; [`Tape::backward`] then propagates adjoints from a `1×1`
//! output to every node.
//!
//! Input derivatives are carried forward as *jets*: a jet for `n` samples is a
//! `4n × m` matrix stacking the value block and its `∂/∂t`, `∂/∂x` and
//! `∂²/∂x²` blocks. Linear maps act on all four blocks alike (the bias touches
//! only the value block) and [`Tape::tanh_jet`] applies the second-order chain
//! rule. Because the jet blocks are ordinary tape nodes, reverse mode over the
//! tape differentiates `u_t` and `u_xx` with respect to the parameters.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

/// Number of stacked blocks in a jet: value, d/dt, d/dx, d²/dx².
pub const JET_BLOCKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Clone, Copy, Debug)]
enum TOp {
    Leaf,
    /// Leaf that never receives an adjoint.
    Constant,
    /// `a · wᵀ`
    MatMulT { a: TensorId, w: TensorId },
    /// `a · wᵀ` plus `bias` on the first `rows` rows, in one node.
    Affine { a: TensorId, w: TensorId, bias: TensorId, rows: usize },
    /// Adds the `1×m` row `bias` to the first `rows` rows of `a`.
    AddBias { a: TensorId, bias: TensorId, rows: usize },
    Tanh(TensorId),
    TanhJet { a: TensorId, n: usize },
    Rows { a: TensorId, start: usize, len: usize },
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    /// `1×1` sum of squared entries.
    SumSquares(TensorId),
}

struct TNode {
    op: TOp,
    value: Array2<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<TNode>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Adjoints {
    grads: Vec<Option<Array2<f64>>>,
}

impl Adjoints {
    /// Adjoint of the leaf `id`, or `None` if the output does not depend on it.
    /// Adjoints of intermediate nodes are released during the sweep.
    pub fn get(&self, id: TensorId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: TOp, value: Array2<f64>) -> TensorId {
        self.nodes.push(TNode { op, value });
        TensorId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: TensorId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> TensorId {
        self.push(TOp::Leaf, value)
    }

    /// Input data: participates in the forward pass but gets no adjoint.
    pub fn constant(&mut self, value: Array2<f64>) -> TensorId {
        self.push(TOp::Constant, value)
    }

    pub fn matmul_t(&mut self, a: TensorId, w: TensorId) -> TensorId {
        let value = self.value(a).dot(&self.value(w).t());
        self.push(TOp::MatMulT { a, w }, value)
    }

    pub fn add_bias(&mut self, a: TensorId, bias: TensorId, rows: usize) -> TensorId {
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_owned();
        value.slice_mut(s![..rows, ..]).outer_iter_mut().for_each(|mut row| row += &b);
        self.push(TOp::AddBias { a, bias, rows }, value)
    }

    /// Same as `matmul_t` followed by `add_bias`, without the intermediate node.
    pub fn affine(&mut self, a: TensorId, w: TensorId, bias: TensorId, rows: usize) -> TensorId {
        let mut value = self.value(a).dot(&self.value(w).t());
        let b = self.value(bias).row(0);
        value.slice_mut(s![..rows, ..]).outer_iter_mut().for_each(|mut row| row += &b);
        self.push(TOp::Affine { a, w, bias, rows }, value)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).mapv(tanh);
        self.push(TOp::Tanh(a), value)
    }

    /// Applies tanh to a stacked jet of `n` samples:
    /// `h = tanh(v)`, `h_t = s·v_t`, `h_x = s·v_x`,
    /// `h_xx = s·v_xx − 2·h·s·v_x²` with `s = 1 − h²`.
    pub fn tanh_jet(&mut self, a: TensorId, n: usize) -> TensorId {
        let input = self.value(a).as_standard_layout();
        assert_eq!(input.nrows(), JET_BLOCKS * n, "jet height must be 4n");
        let block = n * input.ncols();
        let src = input.as_slice().expect("standard layout");
        let (v, rest) = src.split_at(block);
        let (t, rest) = rest.split_at(block);
        let (x, xx) = rest.split_at(block);
        let mut out = vec![0.0; src.len()];
        let (h, rest) = out.split_at_mut(block);
        let (ht, rest) = rest.split_at_mut(block);
        let (hx, hxx) = rest.split_at_mut(block);
        for k in 0..block {
            let th = tanh(v[k]);
            let sl = 1.0 - th * th;
            h[k] = th;
            ht[k] = sl * t[k];
            hx[k] = sl * x[k];
            hxx[k] = sl * xx[k] - 2.0 * th * sl * x[k] * x[k];
        }
        let out = Array2::from_shape_vec(input.raw_dim(), out).expect("shape");
        self.push(TOp::TanhJet { a, n }, out)
    }

    pub fn rows(&mut self, a: TensorId, start: usize, len: usize) -> TensorId {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(TOp::Rows { a, start, len }, value)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.value(a) + self.value(b);
        self.push(TOp::Add(a, b), value)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.value(a) - self.value(b);
        self.push(TOp::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.value(a) * self.value(b);
        self.push(TOp::Mul(a, b), value)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let value = self.value(a) * c;
        self.push(TOp::Scale(a, c), value)
    }

    pub fn sum_squares(&mut self, a: TensorId) -> TensorId {
        let total = self.value(a).iter().fold(0.0, |acc, &v| acc + v * v);
        self.push(TOp::SumSquares(a), Array2::from_elem((1, 1), total))
    }

    fn needs_grad(&self, id: TensorId) -> bool {
        !matches!(self.nodes[id.0].op, TOp::Constant)
    }

    /// Reverse sweep from the `1×1` node `output`.
    pub fn backward(&self, output: TensorId) -> Adjoints {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                TOp::Leaf => grads[i] = Some(g),
                TOp::Constant => {}
                TOp::Affine { a, w, bias, rows } => {
                    let gb = g.slice(s![..rows, ..]).sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, bias, gb);
                    let gw = g.t().dot(self.value(a));
                    accumulate(&mut grads, w, gw);
                    if self.needs_grad(a) {
                        accumulate(&mut grads, a, g.dot(self.value(w)));
                    }
                }
                TOp::MatMulT { a, w } => {
                    let ga = g.dot(self.value(w));
                    let gw = g.t().dot(self.value(a));
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, w, gw);
                }
                TOp::AddBias { a, bias, rows } => {
                    let gb = g.slice(s![..rows, ..]).sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, bias, gb);
                    accumulate(&mut grads, a, g);
                }
                TOp::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|ga, &h| *ga *= 1.0 - h * h);
                    accumulate(&mut grads, a, ga);
                }
                TOp::TanhJet { a, n } => {
                    let ga = tanh_jet_backward(self.value(a).view(), node.value.view(), g.view(), n);
                    accumulate(&mut grads, a, ga);
                }
                TOp::Rows { a, start, len } => {
                    let mut ga = Array2::zeros(self.value(a).raw_dim());
                    ga.slice_mut(s![start..start + len, ..]).assign(&g);
                    accumulate(&mut grads, a, ga);
                }
                TOp::Add(a, b) => {
                    accumulate(&mut grads, b, g.clone());
                    accumulate(&mut grads, a, g);
                }
                TOp::Sub(a, b) => {
                    accumulate(&mut grads, b, -&g);
                    accumulate(&mut grads, a, g);
                }
                TOp::Mul(a, b) => {
                    accumulate(&mut grads, b, &g * self.value(a));
                    accumulate(&mut grads, a, g * self.value(b));
                }
                TOp::Scale(a, c) => accumulate(&mut grads, a, g * c),
                TOp::SumSquares(a) => {
                    let scale = 2.0 * g[[0, 0]];
                    accumulate(&mut grads, a, self.value(a) * scale);
                }
            }
        }
        Adjoints { grads }
    }
}

/// `tanh` through a single `exp` of a nonpositive argument, branch-free so
/// mixed-sign inputs do not stall the loop. Near zero the result is accurate
/// to a few ulps in absolute terms rather than relative ones.
#[inline]
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn accumulate(grads: &mut [Option<Array2<f64>>], id: TensorId, delta: Array2<f64>) {
    match &mut grads[id.0] {
        Some(existing) => *existing += &delta,
        slot @ None => *slot = Some(delta),
    }
}

/// Vector-Jacobian product of [`Tape::tanh_jet`].
///
/// With `s = 1 − h²`, `ds/dv = −2hs` and `d(hs)/dv = s(1 − 3h²)`.
fn tanh_jet_backward(
    input: ArrayView2<'_, f64>,
    output: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    n: usize,
) -> Array2<f64> {
    let block = n * input.ncols();
    let input = input.as_standard_layout();
    let output = output.as_standard_layout();
    let g = g.as_standard_layout();
    let src = input.as_slice().expect("standard layout");
    let (t, x, xx) = (
        &src[block..2 * block],
        &src[2 * block..3 * block],
        &src[3 * block..],
    );
    let h = &output.as_slice().expect("standard layout")[..block];
    let g = g.as_slice().expect("standard layout");
    let (gh, ght, ghx, ghxx) = (
        &g[..block],
        &g[block..2 * block],
        &g[2 * block..3 * block],
        &g[3 * block..],
    );
    let mut out = vec![0.0; src.len()];
    let (gv, rest) = out.split_at_mut(block);
    let (gt, rest) = rest.split_at_mut(block);
    let (gx, gxx) = rest.split_at_mut(block);
    for k in 0..block {
        let hv = h[k];
        let sl = 1.0 - hv * hv;
        gt[k] = ght[k] * sl;
        gx[k] = ghx[k] * sl - 4.0 * ghxx[k] * hv * sl * x[k];
        gxx[k] = ghxx[k] * sl;
        gv[k] = gh[k] * sl - 2.0 * hv * sl * (ght[k] * t[k] + ghx[k] * x[k] + ghxx[k] * xx[k])
            - 2.0 * ghxx[k] * x[k] * x[k] * sl * (1.0 - 3.0 * hv * hv);
    }
    Array2::from_shape_vec(input.raw_dim(), out).expect("shape")
}
