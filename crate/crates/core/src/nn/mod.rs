//! Minimal dense network engine.
//!
//! Networks are plain multilayer perceptrons described by a [`NetworkSpec`];
//! their weights live in a flat [`ParamVector`] so that aggregation and
//! optimizers can treat every model uniformly. Hidden layers use the spec's
//! activation, the output layer emits raw logits.
//!
//! Parameter layout, per layer `l` with fan-in `n` and fan-out `m`: an `n x m`
//! row-major weight block followed by `m` biases.

mod io;
pub mod loss;
mod network;
pub mod optim;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{read_params, write_params};
pub use loss::{cross_entropy, kl_divergence, loss_mutual, softmax_rows, LossWeights, MutualLoss};
pub use network::{forward, gradient};
pub use optim::{adam_step, sgd_step, AdamState};

/// Logit matrix type used throughout the engine.
pub type Matrix = ndarray::Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed in terms of the pre-activation `z`.
    #[inline]
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Architecture of a dense network: input dim, hidden dims, output dim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes",
                "need at least an input and an output layer",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::config("layer_sizes", "every layer needs at least one unit"));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Stable identifier, e.g. `relu:16-8-4`.
    pub fn id(&self) -> String {
        let dims: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        format!("{}:{}", self.activation.name(), dims.join("-"))
    }

    /// Offsets `(weights_start, bias_start, fan_in, fan_out)` for every layer.
    pub(crate) fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n, m) = (w[0], w[1]);
                let entry = (offset, offset + n * m, n, m);
                offset += n * m + m;
                entry
            })
            .collect()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut values = vec![0.0; self.param_count()];
        for (w_start, b_start, n, m) in self.layout() {
            let limit = (6.0 / (n + m) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for v in &mut values[w_start..b_start] {
                *v = dist.sample(rng);
            }
        }
        ParamVector {
            spec_id: self.id(),
            values,
        }
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector {
            spec_id: self.id(),
            values: vec![0.0; self.param_count()],
        }
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.values.len() != self.param_count() {
            return Err(Error::dim("params", self.param_count(), params.values.len()));
        }
        Ok(())
    }
}

/// Flat parameter storage bound to a network spec by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    spec_id: String,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            spec_id: spec_id.into(),
            values,
        }
    }

    /// All-zero vector shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            spec_id: self.spec_id.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            spec_id: self.spec_id.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::dim("params", self.values.len(), other.values.len()));
        }
        if self.spec_id != other.spec_id {
            return Err(Error::Contract(format!(
                "spec mismatch: {} vs {}",
                self.spec_id, other.spec_id
            )));
        }
        Ok(())
    }
}

/// Labelled inputs, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Contract("batch must hold at least one sample".into()));
        }
        if labels.len() != inputs.nrows() {
            return Err(Error::dim("labels", inputs.nrows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Contract(format!("label {bad} outside [0, {n_classes})")));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fraction of rows whose argmax logit matches the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(row.as_slice().expect("standard layout")) == label)
        .count();
    correct as f64 / labels.len() as f64
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
