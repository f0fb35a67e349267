use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};

use super::params::{Bound, ParamId, ParamStore};
use super::rng::SeededRng;
use super::tape::{sigmoid, Tape, Var};
use crate::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply_var(self, tape: &Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }

    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidParameter(format!(
                "unknown activation {other}"
            ))),
        }
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Xavier/Glorot normal weights, zero biases.
    XavierNormal,
    /// Xavier normal everywhere except a zeroed output layer.
    XavierZeroLast,
    Zeros,
}

/// Fully connected feed-forward network.
///
/// Weights are stored `in×out`, so a batch `x` (rows = samples) maps as
/// `x·W + b`. The activation is applied after every hidden layer; the output
/// layer is affine.
#[derive(Debug, Clone)]
pub struct DenseNet {
    widths: Vec<usize>,
    activation: Activation,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
}

impl DenseNet {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        activation: Activation,
        init: Init,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(
            widths.len() >= 2,
            "a dense net needs at least input and output widths"
        );
        assert!(
            widths.iter().all(|&w| w > 0),
            "layer widths must be positive"
        );
        let n_layers = widths.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let zero = match init {
                Init::Zeros => true,
                Init::XavierZeroLast => l + 1 == n_layers,
                Init::XavierNormal => false,
            };
            let w = if zero {
                Array2::zeros((fan_in, fan_out))
            } else {
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                rng.normal_matrix(fan_in, fan_out) * std
            };
            weights.push(store.add(format!("{prefix}.w{l}"), w));
            biases.push(store.add(format!("{prefix}.b{l}"), Array2::zeros((1, fan_out))));
        }
        Self {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        }
    }

    /// Re-attaches a network to parameters already present in `store`
    /// (e.g. after loading a checkpoint).
    pub fn attach(
        store: &ParamStore,
        prefix: &str,
        widths: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let lookup = |name: String, shape: (usize, usize)| -> Result<ParamId> {
                let id = store
                    .id(&name)
                    .ok_or_else(|| Error::InvalidParameter(format!("missing parameter {name}")))?;
                if store.get(id).dim() != shape {
                    return Err(Error::shape(
                        format!("{name} {shape:?}"),
                        format!("{:?}", store.get(id).dim()),
                    ));
                }
                Ok(id)
            };
            weights.push(lookup(format!("{prefix}.w{l}"), (pair[0], pair[1]))?);
            biases.push(lookup(format!("{prefix}.b{l}"), (1, pair[1]))?);
        }
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn weight(&self, layer: usize) -> ParamId {
        self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> ParamId {
        self.biases[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Σ (w_i·w_{i+1} + w_{i+1}) over consecutive widths.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Differentiable batch forward pass.
    pub fn forward_var(&self, tape: &Tape, bound: &Bound, x: Var) -> Var {
        let mut h = x;
        let last = self.weights.len() - 1;
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = tape.add(tape.matmul(h, bound.var(w)), bound.var(b));
            if l < last {
                h = self.activation.apply_var(tape, h);
            }
        }
        h
    }

    /// Plain batch forward pass (no tape).
    pub fn forward_batch(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                x.ncols(),
            ));
        }
        let last = self.weights.len() - 1;
        let mut h = x.to_owned();
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(store.get(w)) + store.get(b);
            if l < last {
                self.activation.apply(&mut h);
            }
        }
        Ok(h)
    }

    /// Forward pass of a single input vector.
    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let out = self.forward_batch(store, &xb)?;
        Ok(out.index_axis(Axis(0), 0).to_vec())
    }
}

/// Affinely squashed sigmoid into `[eps, 1 - eps]`.
pub(crate) fn clamped_sigmoid(x: f64, eps: f64) -> f64 {
    eps + (1.0 - 2.0 * eps) * sigmoid(x)
}
