//! Dense feed-forward network: initialization, batched forward with
//! per-layer capture, backpropagation, and gradient containers.
//!
//! The last hidden layer's post-activation output is the representation the
//! probe suite consumes; `Network::capture_index` addresses it in the
//! forward trace.

mod adam;
pub mod checkpoint;
mod gradcheck;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;

use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;
use crate::rng;
use crate::tensor::{axpy, Tensor};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
}

impl Activation {
    pub fn apply(&self, row: &mut [f64]) {
        if let Activation::ReLU = self {
            for v in row {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    /// Stable tag used in checkpoint metadata.
    pub fn tag(&self) -> &'static str {
        match self {
            Activation::ReLU => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::ReLU),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// Row-major, shape (out, in).
    pub weights: Tensor,
    /// Shape (out, 1).
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Per-layer weight and bias gradients, shapes mirroring the network.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Flat view in `[w0, b0, w1, b1, ...]` order, matching
    /// [`Network::param_tensors_mut`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|g| [&g.weights, &g.bias])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    capture_index: usize,
}

impl Network {
    /// Builds a network with the given layer widths and activations.
    ///
    /// Weights are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases
    /// zero, drawn deterministically from `seed`.
    pub fn init(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Network> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(format!(
                "need at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::config(format!(
                "{} activations for {} layers",
                activations.len(),
                layer_sizes.len() - 1
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("zero-width layer"));
        }
        let mut rng = rng::seeded(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (layer_sizes[k], layer_sizes[k + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            layers.push(Layer {
                weights: Tensor::from_vec(fan_out, fan_in, data)?,
                bias: Tensor::zeros(fan_out, 1),
                activation: act,
            });
        }
        Network::from_layers(layers)
    }

    /// ReLU hidden layers, identity output layer.
    pub fn feedforward(layer_sizes: &[usize], seed: u64) -> Result<Network> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("need at least 2 layer sizes"));
        }
        let n = layer_sizes.len() - 1;
        let mut acts = vec![Activation::ReLU; n];
        acts[n - 1] = Activation::Identity;
        Network::init(layer_sizes, &acts, seed)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Network> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::dimension(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.shape() != (l.out_dim(), 1) {
                return Err(Error::dimension(format!(
                    "bias shape {:?} for layer of width {}",
                    l.bias.shape(),
                    l.out_dim()
                )));
            }
        }
        let capture_index = layers.len().saturating_sub(2);
        Ok(Network {
            layers,
            capture_index,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Index into the forward trace of the penultimate layer output.
    pub fn capture_index(&self) -> usize {
        self.capture_index
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Layer::out_dim));
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Mutable parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass; returns the post-activation output of every layer in
    /// order. The last entry is the network output, the entry at
    /// `capture_index` the penultimate representation.
    pub fn forward(&self, batch: &Tensor) -> Result<Vec<Tensor>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::dimension(format!(
                "batch width {} does not match input width {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { batch } else { &outputs[k - 1] };
            let mut y = input.matmul_nt(&layer.weights);
            let bias = layer.bias.data();
            let act = layer.activation;
            for_each_chunk_mut(y.data_mut(), bias.len(), |_, row| {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
                act.apply(row);
            });
            outputs.push(y);
        }
        Ok(outputs)
    }

    /// Output of the layer at `capture_index` only.
    pub fn capture(&self, batch: &Tensor) -> Result<Tensor> {
        let mut outputs = self.forward(batch)?;
        Ok(outputs.swap_remove(self.capture_index))
    }

    /// Backpropagates `output_grad` (d loss / d last-layer output) through
    /// the trace produced by [`Network::forward`] on `batch`.
    pub fn backward(
        &self,
        batch: &Tensor,
        trace: &[Tensor],
        output_grad: &Tensor,
    ) -> Result<Gradients> {
        if trace.len() != self.layers.len() {
            return Err(Error::Internal(format!(
                "trace has {} entries for {} layers",
                trace.len(),
                self.layers.len()
            )));
        }
        let last = trace.last().unwrap();
        if output_grad.shape() != last.shape() {
            return Err(Error::dimension(format!(
                "output_grad shape {:?} does not match output shape {:?}",
                output_grad.shape(),
                last.shape()
            )));
        }
        for (k, (t, l)) in trace.iter().zip(&self.layers).enumerate() {
            if t.cols() != l.out_dim() || t.rows() != batch.rows() {
                return Err(Error::Internal(format!(
                    "trace entry {k} has shape {:?}, expected ({}, {})",
                    t.shape(),
                    batch.rows(),
                    l.out_dim()
                )));
            }
        }

        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            mask_activation_grad(&mut delta, &trace[k], layer.activation);

            let input = if k == 0 { batch } else { &trace[k - 1] };
            let dw = delta.matmul_tn(input);
            let mut db = Tensor::zeros(layer.out_dim(), 1);
            for s in 0..delta.rows() {
                axpy(db.data_mut(), 1.0, delta.row(s));
            }
            grads.push(LayerGrad { weights: dw, bias: db });

            if k > 0 {
                delta = delta.matmul_nn(&layer.weights);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

/// delta <- delta * activation'(y), where y is the post-activation output.
fn mask_activation_grad(delta: &mut Tensor, y: &Tensor, act: Activation) {
    if let Activation::ReLU = act {
        let cols = delta.cols();
        for_each_chunk_mut(delta.data_mut(), cols, |r, row| {
            for (d, yv) in row.iter_mut().zip(y.row(r)) {
                if *yv <= 0.0 {
                    *d = 0.0;
                }
            }
        });
    }
}
