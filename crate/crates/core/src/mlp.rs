//! Fully connected networks with swish/linear activations, exact backward
//! passes and forward-mode input Jacobians.
//!
//! Weights are stored `out × in`, so a layer computes `a' = act(W a + b)`.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Swish,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => math::swish(x),
            Activation::Linear => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => math::swish_derivative(x),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawDense"))]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape("Dense::new bias", weight.rows(), bias.len()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = math::sqrt(6.0 / (in_dim + out_dim) as f64);
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-limit..limit));
        Self {
            weight,
            bias: vec![0.0; out_dim],
            activation,
        }
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// A chain of dense layers. Every parameter mutation assigns a new version,
/// which is how stale tapes are detected.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawNetwork"))]
pub struct MlpNetwork {
    layers: Vec<Dense>,
    #[cfg_attr(feature = "serde", serde(skip, default = "fresh_version"))]
    version: u64,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawDense {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

#[cfg(feature = "serde")]
impl TryFrom<RawDense> for Dense {
    type Error = Error;

    fn try_from(raw: RawDense) -> Result<Self> {
        Dense::new(raw.weight, raw.bias, raw.activation)
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawNetwork {
    layers: Vec<Dense>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawNetwork> for MlpNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        MlpNetwork::new(raw.layers)
    }
}

impl PartialEq for MlpNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer cache from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    /// Input to each layer (layer 0 sees the batch itself).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    /// Flattens in the same order as [`MlpNetwork::write_params`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
    }
}

impl MlpNetwork {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape("MlpNetwork layer chain", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        for l in &layers {
            if !l.weight.is_finite() || !l.bias.iter().all(|b| b.is_finite()) {
                return Err(Error::invalid("network parameters must be finite"));
            }
        }
        Ok(Self {
            layers,
            version: fresh_version(),
        })
    }

    /// `in → hidden[0] → … → hidden[last] → out`, hidden layers use `hidden_act`,
    /// the output layer `out_act`.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for &h in hidden {
            layers.push(Dense::glorot(prev, h, hidden_act, rng));
            prev = h;
        }
        layers.push(Dense::glorot(prev, out_dim, out_act, rng));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    /// Appends all parameters (per layer: weights row-major, then bias).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    /// Loads parameters from the front of `params`, returns how many were consumed.
    pub fn read_params(&mut self, params: &[f64]) -> Result<usize> {
        let n = self.num_params();
        if params.len() < n {
            return Err(Error::shape("MlpNetwork::read_params", n, params.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&params[off..off + w.len()]);
            off += w.len();
            let b = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + b]);
            off += b;
        }
        self.version = fresh_version();
        Ok(n)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.in_dim() {
            return Err(Error::shape("MlpNetwork input width", self.in_dim(), batch.cols()));
        }
        Ok(())
    }

    /// Batched forward pass returning the output and the tape needed by [`backward`](Self::backward).
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let z = affine(layer, &current);
            let a = map(&z, layer.activation);
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok((
            current,
            Tape {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut z = affine(layer, &current);
            z.as_mut_slice().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            current = z;
        }
        Ok(current)
    }

    /// Single-sample forward pass.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(x))?.into_vec())
    }

    /// Reverse pass: given `∂L/∂output` (batch × out), returns parameter
    /// gradients and `∂L/∂input` (batch × in).
    pub fn backward(&self, tape: &Tape, upstream: &Matrix) -> Result<(MlpGradients, Matrix)> {
        if tape.version != self.version || tape.inputs.len() != self.layers.len() {
            return Err(Error::ContractViolation("tape was recorded by a different network state"));
        }
        let n = tape.batch_size();
        if upstream.shape() != (n, self.out_dim()) {
            return Err(Error::shape("MlpNetwork::backward upstream", n * self.out_dim(), upstream.as_slice().len()));
        }
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &tape.pre[idx];
            let input = &tape.inputs[idx];
            // ∂L/∂pre
            if layer.activation != Activation::Linear {
                for (g, &z) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g *= layer.activation.derivative(z);
                }
            }
            let (out_dim, in_dim) = layer.weight.shape();
            let mut dw = Matrix::zeros(out_dim, in_dim);
            let mut db = vec![0.0; out_dim];
            let mut dx = Matrix::zeros(n, in_dim);
            for i in 0..n {
                let gi = grad.row(i);
                let xi = input.row(i);
                for (o, &g) in gi.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    for (w, &x) in dw.row_mut(o).iter_mut().zip(xi) {
                        *w += g * x;
                    }
                }
                let dxi = dx.row_mut(i);
                for (o, &g) in gi.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, &w) in dxi.iter_mut().zip(layer.weight.row(o)) {
                        *d += g * w;
                    }
                }
            }
            weights.push(dw);
            biases.push(db);
            grad = dx;
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGradients { weights, biases }, grad))
    }

    /// Exact Jacobian `∂out/∂in` (out × in) at a single input, by forward-mode
    /// propagation through the layers.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.in_dim() {
            return Err(Error::shape("MlpNetwork::jacobian input", self.in_dim(), x.len()));
        }
        let mut a = x.to_vec();
        let mut jac = Matrix::identity(x.len());
        for layer in &self.layers {
            let z: Vec<f64> = layer
                .weight
                .row_iter()
                .zip(&layer.bias)
                .map(|(w, b)| math::dot(w, &a) + b)
                .collect();
            let mut next = layer.weight.matmul(&jac)?;
            for (o, &zo) in z.iter().enumerate() {
                let d = layer.activation.derivative(zo);
                if d != 1.0 {
                    next.row_mut(o).iter_mut().for_each(|v| *v *= d);
                }
            }
            a = z.into_iter().map(|v| layer.activation.apply(v)).collect();
            jac = next;
        }
        Ok(jac)
    }
}

fn affine(layer: &Dense, input: &Matrix) -> Matrix {
    let n = input.rows();
    let mut out = Matrix::zeros(n, layer.out_dim());
    for i in 0..n {
        let x = input.row(i);
        for ((o, w), b) in out.row_mut(i).iter_mut().zip(layer.weight.row_iter()).zip(&layer.bias) {
            *o = math::dot(w, x) + b;
        }
    }
    out
}

fn map(z: &Matrix, act: Activation) -> Matrix {
    let mut out = z.clone();
    if act != Activation::Linear {
        out.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
    }
    out
}
