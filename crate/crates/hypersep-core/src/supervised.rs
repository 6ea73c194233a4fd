//! Supervised reference training: same trunk as the contrastive encoder
//! with a C-unit head, MSE on one-hot targets, single elastic draw per
//! sample per epoch.

use crate::augment::{augment_sample, TransformSpec};
use crate::data::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network};
use crate::parallel::for_each_chunk_mut;
use crate::rng;
use crate::tensor::Tensor;

/// Mean over batch and components of squared error, with its gradient
/// `2 (outputs - targets) / (B C)`.
pub fn mse_loss(outputs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if outputs.shape() != targets.shape() {
        return Err(Error::dimension(format!(
            "mse shapes {:?} vs {:?}",
            outputs.shape(),
            targets.shape()
        )));
    }
    let count = outputs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(outputs.rows(), outputs.cols());
    for ((g, &o), &t) in grad.data_mut().iter_mut().zip(outputs.data()).zip(targets.data()) {
        let d = o - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

/// One-hot rows, one per label.
pub fn one_hot_targets(labels: &[u8], n_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), n_classes);
    for (i, &l) in labels.iter().enumerate() {
        if (l as usize) >= n_classes {
            return Err(Error::Validation(format!(
                "label {l} at row {i} outside [0, {n_classes})"
            )));
        }
        t.set(i, l as usize, 1.0);
    }
    Ok(t)
}

/// Argmax per row; ties break toward the lowest index.
pub fn predict_labels(net: &Network, images: &Tensor) -> Result<Vec<usize>> {
    let outputs = net.forward(images)?;
    let out = outputs.last().unwrap();
    Ok((0..out.rows()).map(|r| argmax(out.row(r))).collect())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct SupervisedConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed_data: u64,
    pub seed_augment: u64,
    pub adam: AdamConfig,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            batch_size: 1000,
            epochs: 50,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Builds the augmented input tensor for one minibatch: a single
/// `augment_sample` draw per sample, substreams keyed on
/// `(epoch, global sample index)`. Caller must have validated `spec`.
fn build_augmented_batch(
    dataset: &Dataset,
    indices: &[usize],
    spec: &TransformSpec,
    seed_augment: u64,
    epoch: usize,
) -> Tensor {
    let dim = dataset.images().cols();
    let side = (dim as f64).sqrt().round() as usize;
    assert_eq!(side * side, dim, "images are not square");
    let mut batch = Tensor::zeros(indices.len(), dim);
    for_each_chunk_mut(batch.data_mut(), dim, |pos, out| {
        let sample = indices[pos];
        let mut r = rng::substream(seed_augment, rng::sample_stream(epoch, sample));
        let aug = augment_sample(dataset.images().row(sample), side, spec, &mut r)
            .expect("spec validated before training");
        out.copy_from_slice(&aug);
    });
    batch
}

/// MSE training against one-hot targets. Incomplete trailing batches are
/// kept (the loss is a per-element mean, so a short batch is well posed).
pub fn train_supervised(
    dataset: &Dataset,
    mut net: Network,
    spec: &TransformSpec,
    config: &SupervisedConfig,
) -> Result<(Network, Vec<f64>)> {
    spec.validate()?;
    if net.output_dim() != dataset.n_classes() {
        return Err(Error::config(format!(
            "net head width {} does not match {} classes",
            net.output_dim(),
            dataset.n_classes()
        )));
    }
    let shapes: Vec<(usize, usize)> = net
        .layers()
        .iter()
        .flat_map(|l| [l.weights.shape(), l.bias.shape()])
        .collect();
    let mut adam = AdamState::new(&shapes, config.adam)?;

    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let plan = BatchPlan::new(
            dataset.len(),
            config.batch_size.min(dataset.len()),
            config.seed_data,
            epoch,
        )?;
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, indices) in plan.batches().enumerate() {
            let batch = build_augmented_batch(dataset, indices, spec, config.seed_augment, epoch);
            let targets = one_hot_targets(&dataset.gather_labels(indices), dataset.n_classes())?;
            let trace = net.forward(&batch)?;
            let (loss, grad) = mse_loss(trace.last().unwrap(), &targets)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "epoch {epoch}, batch {b}: MSE loss is {loss}"
                )));
            }
            let grads = net.backward(&batch, &trace, &grad)?;
            let mut params = net.param_tensors_mut();
            adam.step(&mut params, &grads.tensors())?;
            epoch_loss += loss;
            batches += 1;
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok((net, curve))
}
