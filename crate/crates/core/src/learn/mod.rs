//! Dense networks with hand-written backpropagation, masked categorical policies, PPO losses,
//! generalized advantage estimation, Adam, and a binary checkpoint format.
//!
//! Everything is generic over [`Scalar`] so gradients can be verified in 64-bit mode while
//! training runs in 32-bit.

mod adam;
mod checkpoint;
mod losses;

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use losses::*;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("mask row {0} has no legal action")]
    EmptyMask(usize),
    #[error("target action {action} is masked out in row {row}")]
    MaskedTarget { row: usize, action: usize },
    #[error("old probability for row {0} must be positive")]
    NonPositiveOldProb(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Scalar: LinalgScalar + Float + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Raw action scores, turned into probabilities by a masked softmax.
    Policy,
    /// A single scalar state value.
    Value,
}

/// Fully connected network with rectifier hidden layers and a linear output layer.
///
/// Weights of layer `i` are stored `[dims[i], dims[i + 1]]` so a batch `x` maps to `x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<F> {
    pub head: Head,
    pub dims: Vec<usize>,
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

/// Layer inputs saved by [`DenseNet::forward_cached`]; `inputs[i]` feeds layer `i`.
pub struct ForwardCache<F> {
    pub inputs: Vec<Array2<F>>,
    pub output: Array2<F>,
}

/// Gradients shaped like a [`DenseNet`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(net: &DenseNet<F>) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn global_norm(&self) -> F {
        let sq = self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(F::zero(), |acc, &g| acc + g * g);
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: F) {
        for w in &mut self.weights {
            w.mapv_inplace(|g| g * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|g| g * factor);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm && norm > F::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

impl<F: Scalar> DenseNet<F> {
    /// He-uniform initialization; the policy output layer is scaled down so a fresh policy is
    /// close to uniform over legal actions.
    pub fn new(dims: &[usize], head: Head, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output sizes");
        let layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for i in 0..layers {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let mut bound = (6.0 / fan_in as f64).sqrt();
            if i + 1 == layers && head == Head::Policy {
                bound *= 0.01;
            }
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || F::from_f64(rng.random_range(-bound..bound)));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        DenseNet { head, dims: dims.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("nonempty dims")
    }

    pub fn num_params(&self) -> usize {
        self.dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let layers = self.weights.len();
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for i in 1..layers {
            h.mapv_inplace(relu);
            h = h.dot(&self.weights[i]) + &self.biases[i];
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> ForwardCache<F> {
        let mut inputs = Vec::with_capacity(self.weights.len());
        inputs.push(x.to_owned());
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for i in 1..self.weights.len() {
            h.mapv_inplace(relu);
            let next = h.dot(&self.weights[i]) + &self.biases[i];
            inputs.push(h);
            h = next;
        }
        ForwardCache { inputs, output: h }
    }

    /// Backpropagates `d_out = dL/d(output)` through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: Array2<F>) -> Gradients<F> {
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = d_out;
        for i in (0..layers).rev() {
            let input = &cache.inputs[i];
            // Keep gradients row-major; dot may return column-major for single-column deltas.
            gw.push(input.t().dot(&delta).as_standard_layout().into_owned());
            gb.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut prev = delta.dot(&self.weights[i].t());
                ndarray::Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Gradients { weights: gw, biases: gb }
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn from_flat(dims: &[usize], head: Head, params: &[F]) -> Result<Self, LearnError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(LearnError::Shape(format!("invalid layer dims {dims:?}")));
        }
        let expected: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        if params.len() != expected {
            return Err(LearnError::Shape(format!("expected {expected} parameters, got {}", params.len())));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0;
        for d in dims.windows(2) {
            let n = d[0] * d[1];
            weights.push(Array2::from_shape_vec((d[0], d[1]), params[offset..offset + n].to_vec()).expect("sized"));
            offset += n;
            biases.push(Array1::from(params[offset..offset + d[1]].to_vec()));
            offset += d[1];
        }
        Ok(DenseNet { head, dims: dims.to_vec(), weights, biases })
    }

    pub fn cast<G: Scalar>(&self) -> DenseNet<G> {
        DenseNet {
            head: self.head,
            dims: self.dims.clone(),
            weights: self.weights.iter().map(|w| w.mapv(|v| G::from_f64(v.to_f64()))).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| G::from_f64(v.to_f64()))).collect(),
        }
    }

    /// Mutable views of every parameter tensor in flat order.
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub(crate) fn check_grads(&self, grads: &Gradients<F>) -> Result<(), LearnError> {
        let same = grads.weights.len() == self.weights.len()
            && grads.weights.iter().zip(&self.weights).all(|(g, w)| g.dim() == w.dim())
            && grads.biases.iter().zip(&self.biases).all(|(g, b)| g.dim() == b.dim());
        if same {
            Ok(())
        } else {
            Err(LearnError::Shape("gradients do not match network parameters".into()))
        }
    }
}

fn relu<F: Scalar>(v: F) -> F {
    if v > F::zero() {
        v
    } else {
        F::zero()
    }
}
