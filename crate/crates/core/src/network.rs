//! Fully connected Tanh network `u(t, x; θ)` with a linear output layer.
//!
//! # Parameter layout
//!
//! `θ` is one flat vector, layer by layer from input to output. Each layer
//! stores its weight matrix of shape `fan_out × fan_in` in row-major order
//! (entry `W[j][i]` connects input `i` to unit `j`), followed by its
//! `fan_out` biases. Checkpoints rely on this layout.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Adjoints, Bindings, Expr, Graph, Tape, TensorId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("parameter vector has length {actual}, architecture needs {expected}")]
    ParamLength { expected: usize, actual: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::tanh(7, 50)
    }
}

impl Architecture {
    /// `(t, x) → hidden_layers × hidden_width → u`.
    pub fn tanh(hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_dim: 2,
            hidden_layers,
            hidden_width,
            output_dim: 1,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(NetworkError::Architecture(format!(
                "need at least one hidden layer of width ≥ 1, got {}×{}",
                self.hidden_layers, self.hidden_width
            )));
        }
        if self.input_dim != 2 || self.output_dim != 1 {
            return Err(NetworkError::Architecture(format!(
                "the solver maps (t, x) to u, got {} inputs and {} outputs",
                self.input_dim, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        shapes.push((self.input_dim, self.hidden_width));
        for _ in 1..self.hidden_layers {
            shapes.push((self.hidden_width, self.hidden_width));
        }
        shapes.push((self.hidden_width, self.output_dim));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    pub fn check(&self, params: &Parameters) -> Result<(), NetworkError> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(NetworkError::ParamLength {
                expected,
                actual: params.len(),
            });
        }
        Ok(())
    }
}

/// Flat parameter vector `θ`, laid out as described in the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameters(pub Vec<f64>);

impl Parameters {
    pub fn zeros(arch: &Architecture) -> Self {
        Self(vec![0.0; arch.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Xavier-normal weights, `σ = √(2/(fan_in + fan_out))`, and zero biases.
pub fn xavier_init(arch: &Architecture, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layer_shapes() {
        let sigma = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let normal = Normal::new(0.0, sigma).expect("positive standard deviation");
        theta.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
        theta.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Parameters(theta)
}

/// Declares one graph variable per parameter, named `theta[i]`, and the
/// matching bindings.
pub fn bind_parameters<'g>(graph: &'g Graph, params: &Parameters) -> (Vec<Expr<'g>>, Bindings) {
    let mut bindings = Bindings::new();
    let vars = params
        .0
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let name = format!("theta[{i}]");
            bindings.set(name.clone(), v);
            graph.var(&name)
        })
        .collect();
    (vars, bindings)
}

/// Builds `u(t, x; θ)` as an expression. `theta` may hold variables or
/// constants.
pub fn forward<'g>(
    arch: &Architecture,
    theta: &[Expr<'g>],
    t: Expr<'g>,
    x: Expr<'g>,
) -> Result<Expr<'g>, NetworkError> {
    arch.validate()?;
    let expected = arch.param_count();
    if theta.len() != expected {
        return Err(NetworkError::ParamLength {
            expected,
            actual: theta.len(),
        });
    }
    let graph = t.graph();
    let shapes = arch.layer_shapes();
    let mut h = vec![t, x];
    let mut offset = 0;
    for (layer, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let weights = &theta[offset..offset + fan_in * fan_out];
        let biases = &theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let is_output = layer + 1 == shapes.len();
        h = (0..fan_out)
            .map(|j| {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                let terms = row.iter().zip(&h).map(|(&w, &hi)| w * hi);
                let a = graph.sum(terms) + biases[j];
                if is_output {
                    a
                } else {
                    a.tanh()
                }
            })
            .collect();
    }
    Ok(h[0])
}

/// Scalar evaluation of the network at one point through the expression graph.
pub fn evaluate_point(
    arch: &Architecture,
    params: &Parameters,
    t: f64,
    x: f64,
) -> Result<f64, NetworkError> {
    arch.check(params)?;
    let g = Graph::new();
    let theta: Vec<Expr<'_>> = params.0.iter().map(|&v| g.constant(v)).collect();
    let u = forward(arch, &theta, g.constant(t), g.constant(x))?;
    Ok(g.evaluate(u, &Bindings::new()).expect("no free variables"))
}

/// Points per block in batched evaluation. Fixed so that reductions over
/// blocks happen in the same order regardless of the thread count.
pub const BLOCK: usize = 256;

/// Network parameters recorded as tape leaves, one `(W, b)` pair per layer.
pub struct TapeParams {
    layers: Vec<(TensorId, TensorId)>,
}

impl TapeParams {
    pub fn record(tape: &mut Tape, arch: &Architecture, params: &Parameters) -> Self {
        let mut offset = 0;
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let nw = fan_in * fan_out;
                let w = Array2::from_shape_vec((fan_out, fan_in), params.0[offset..offset + nw].to_vec())
                    .expect("layer shape");
                let b = Array2::from_shape_vec((1, fan_out), params.0[offset + nw..offset + nw + fan_out].to_vec())
                    .expect("bias shape");
                offset += nw + fan_out;
                (tape.leaf(w), tape.leaf(b))
            })
            .collect();
        Self { layers }
    }

    /// Flattens parameter adjoints back into the checkpoint layout. Layers the
    /// output does not depend on contribute zeros.
    pub fn gradient(&self, arch: &Architecture, adjoints: &Adjoints) -> Vec<f64> {
        let mut out = Vec::with_capacity(arch.param_count());
        for (&(w, b), (fan_in, fan_out)) in self.layers.iter().zip(arch.layer_shapes()) {
            match adjoints.get(w) {
                Some(gw) => out.extend(gw.iter().copied()),
                None => out.extend(std::iter::repeat_n(0.0, fan_in * fan_out)),
            }
            match adjoints.get(b) {
                Some(gb) => out.extend(gb.iter().copied()),
                None => out.extend(std::iter::repeat_n(0.0, fan_out)),
            }
        }
        out
    }

    /// Network output for a batch of `(t, x)` rows; returns an `n×1` node.
    pub fn forward_values(&self, tape: &mut Tape, points: &[(f64, f64)]) -> TensorId {
        let n = points.len();
        let input = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { points[i].0 } else { points[i].1 });
        let mut h = tape.constant(input);
        let last = self.layers.len() - 1;
        for (layer, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.affine(h, w, b, n);
            h = if layer == last { z } else { tape.tanh(z) };
        }
        h
    }

    /// Second-order input jet of the output for a batch of points; returns a
    /// `4n×1` node stacking `u`, `u_t`, `u_x`, `u_xx`.
    pub fn forward_jet(&self, tape: &mut Tape, points: &[(f64, f64)]) -> TensorId {
        let n = points.len();
        let input = Array2::from_shape_fn((4 * n, 2), |(r, j)| match (r / n, j) {
            (0, 0) => points[r].0,
            (0, _) => points[r].1,
            // seeds: d/dt of (t, x) is (1, 0); d/dx is (0, 1); second derivative 0
            (1, 0) | (2, 1) => 1.0,
            _ => 0.0,
        });
        let mut h = tape.constant(input);
        let last = self.layers.len() - 1;
        for (layer, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.affine(h, w, b, n);
            h = if layer == last { z } else { tape.tanh_jet(z, n) };
        }
        h
    }
}

/// Batched network evaluation at arbitrary points.
pub fn predict_points(
    arch: &Architecture,
    params: &Parameters,
    points: &[(f64, f64)],
) -> Result<Vec<f64>, NetworkError> {
    arch.validate()?;
    arch.check(params)?;
    let blocks: Vec<Vec<f64>> = points
        .par_chunks(BLOCK)
        .map(|chunk| {
            let mut tape = Tape::new();
            let tp = TapeParams::record(&mut tape, arch, params);
            let out = tp.forward_values(&mut tape, chunk);
            tape.value(out).iter().copied().collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// `u` on the Cartesian product: row `i` is `times[i]`, column `j` is `positions[j]`.
pub fn predict_grid(
    arch: &Architecture,
    params: &Parameters,
    times: &[f64],
    positions: &[f64],
) -> Result<Array2<f64>, NetworkError> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .flat_map(|&t| positions.iter().map(move |&x| (t, x)))
        .collect();
    let values = predict_points(arch, params, &points)?;
    Ok(Array2::from_shape_vec((times.len(), positions.len()), values).expect("grid shape"))
}
