//! NT-Xent contrastive loss with analytic gradients, and the training
//! loop that produces the self-supervised encoder.
//!
//! Rows of a batch are ordered as partner pairs: rows `2k` and `2k+1`
//! are the two views of source sample `k`. The loss couples every row
//! with all `2N - 1` others through cosine similarities, so the full
//! similarity matrix is materialized per batch.

use crate::augment::{augment_sample, make_view_pair, TransformSpec};
use crate::data::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network};
use crate::parallel::{for_each_chunk_mut, map_indexed};
use crate::rng;
use crate::tensor::{dot, Tensor};

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len(), "cosine of unequal lengths");
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if !(nu > 0.0) || !(nv > 0.0) {
        return Err(Error::Degenerate(format!(
            "cosine similarity of zero-norm vector (|u| = {nu}, |v| = {nv})"
        )));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Partner row of `i` under the pairing (0,1), (2,3), ...
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// A batch of last-layer representations with pairing structure and
/// temperature. Norms are validated once at construction.
pub struct ContrastiveBatch<'a> {
    z: &'a Tensor,
    norms: Vec<f64>,
    tau: f64,
}

impl<'a> ContrastiveBatch<'a> {
    pub fn new(z: &'a Tensor, tau: f64) -> Result<Self> {
        if z.rows() == 0 || z.rows() % 2 != 0 {
            return Err(Error::dimension(format!(
                "contrastive batch needs a positive even row count, got {}",
                z.rows()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {tau}")));
        }
        let mut norms = Vec::with_capacity(z.rows());
        for i in 0..z.rows() {
            let r = z.row(i);
            let n = dot(r, r).sqrt();
            if !n.is_finite() {
                return Err(Error::Numerical(format!("representation row {i} is not finite")));
            }
            if n == 0.0 {
                return Err(Error::Degenerate(format!("representation row {i} has zero norm")));
            }
            norms.push(n);
        }
        Ok(ContrastiveBatch { z, norms, tau })
    }

    pub fn n_pairs(&self) -> usize {
        self.z.rows() / 2
    }

    pub fn rows(&self) -> usize {
        self.z.rows()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Row-normalized copy of `z`.
    fn unit_rows(&self) -> Tensor {
        let mut zhat = self.z.clone();
        let cols = zhat.cols();
        let norms = &self.norms;
        for_each_chunk_mut(zhat.data_mut(), cols, |i, row| {
            let inv = 1.0 / norms[i];
            for v in row {
                *v *= inv;
            }
        });
        zhat
    }

    /// Full similarity matrix, entries clamped to `[-1, 1]`.
    fn similarity_matrix(&self, zhat: &Tensor) -> Tensor {
        let mut s = zhat.matmul_nt(zhat);
        for v in s.data_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct LossReport {
    /// Batch loss: mean of `pair_losses`.
    pub loss: f64,
    /// `pair_losses[i]` is `l(i, partner(i))`; length `2N`.
    pub pair_losses: Vec<f64>,
    /// Analytic `d loss / d z`, same shape as the input representations.
    pub grad: Tensor,
}

/// The pair loss `l(i, j) = -s_ij/tau + log sum_{k != i} exp(s_ik/tau)`
/// for `j == partner(i)`. Standalone evaluation; the batch path
/// recomputes these from the shared similarity matrix.
pub fn nt_xent_pair(batch: &ContrastiveBatch, i: usize, j: usize) -> Result<f64> {
    if i >= batch.rows() || j >= batch.rows() {
        return Err(Error::Validation(format!(
            "pair indices ({i}, {j}) out of range for {} rows",
            batch.rows()
        )));
    }
    if j != partner(i) {
        return Err(Error::Validation(format!(
            "rows {i} and {j} are not partners of the same source sample"
        )));
    }
    let zi = batch.z.row(i);
    let mut sims = Vec::with_capacity(batch.rows() - 1);
    let mut sim_ij = 0.0;
    for k in 0..batch.rows() {
        if k == i {
            continue;
        }
        let s = cosine_similarity(zi, batch.z.row(k))? / batch.tau;
        if k == j {
            sim_ij = s;
        }
        sims.push(s);
    }
    Ok(pair_loss_from_sims(&sims, sim_ij))
}

/// Max-subtracted log-sum-exp over the anchor's `2N - 1` similarity
/// terms, minus the positive term. The subtraction makes the `N = 1`
/// case exactly zero; the `max(0)` guard absorbs roundoff elsewhere.
fn pair_loss_from_sims(sims_over_tau: &[f64], positive_over_tau: f64) -> f64 {
    let m = sims_over_tau.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = sims_over_tau.iter().map(|&s| (s - m).exp()).sum();
    (m + sum.ln() - positive_over_tau).max(0.0)
}

/// NT-Xent loss over the whole batch, with the analytic gradient.
///
/// Writing `w_ik = exp(s_ik / tau) / sum_{m != i} exp(s_im / tau)`, the
/// derivative of the loss in the similarities is
/// `G_ik = (w_ik - [k == partner(i)]) / (2N tau)` for `k != i`. Since
/// `s_ik = s_ki`, row `a` of the representation gradient combines
/// `C = G + G^T`:
///
/// `d L / d z_a = (1 / |z_a|) * ( (C zhat)_a - (sum_k C_ak s_ak) zhat_a )`
pub fn nt_xent_batch(batch: &ContrastiveBatch) -> Result<LossReport> {
    let n2 = batch.rows();
    let tau = batch.tau;
    let zhat = batch.unit_rows();
    let s = batch.similarity_matrix(&zhat);

    let row_ids: Vec<usize> = (0..n2).collect();
    // (log-sum-exp, pair loss) per anchor row
    let stats: Vec<(f64, f64)> = map_indexed(&row_ids, |_, &i| {
        let srow = s.row(i);
        let mut m = f64::NEG_INFINITY;
        for (k, &v) in srow.iter().enumerate() {
            if k != i {
                m = m.max(v / tau);
            }
        }
        let mut sum = 0.0;
        for (k, &v) in srow.iter().enumerate() {
            if k != i {
                sum += (v / tau - m).exp();
            }
        }
        let lse = m + sum.ln();
        (lse, (lse - srow[partner(i)] / tau).max(0.0))
    });

    let pair_losses: Vec<f64> = stats.iter().map(|&(_, l)| l).collect();
    let loss = pair_losses.iter().sum::<f64>() / n2 as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("NT-Xent loss is {loss}")));
    }

    let scale = 1.0 / (n2 as f64 * tau);
    let mut c = Tensor::zeros(n2, n2);
    for_each_chunk_mut(c.data_mut(), n2, |i, crow| {
        let lse_i = stats[i].0;
        for (k, out) in crow.iter_mut().enumerate() {
            if k == i {
                continue;
            }
            let mut g = (s.get(i, k) / tau - lse_i).exp();
            if k == partner(i) {
                g -= 1.0;
            }
            let mut g_t = (s.get(k, i) / tau - stats[k].0).exp();
            if i == partner(k) {
                g_t -= 1.0;
            }
            *out = scale * (g + g_t);
        }
    });

    let projected = c.matmul_nn(&zhat);
    let mut grad = Tensor::zeros(n2, zhat.cols());
    let norms = &batch.norms;
    for_each_chunk_mut(grad.data_mut(), zhat.cols(), |a, grow| {
        let coupling = dot(c.row(a), s.row(a));
        let inv = 1.0 / norms[a];
        for ((g, &p), &zh) in grow.iter_mut().zip(projected.row(a)).zip(zhat.row(a)) {
            *g = inv * (p - coupling * zh);
        }
    });

    Ok(LossReport { loss, pair_losses, grad })
}

#[derive(Debug, Clone)]
pub struct ContrastiveConfig {
    pub tau: f64,
    /// Pair count N; each minibatch holds 2N views.
    pub pairs: usize,
    pub epochs: usize,
    pub seed_data: u64,
    pub seed_augment: u64,
    pub adam: AdamConfig,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            tau: 1.0,
            pairs: 1000,
            epochs: 200,
            seed_data: 0,
            seed_augment: 0,
            adam: AdamConfig::default(),
        }
    }
}

fn image_side(dim: usize) -> usize {
    let side = (dim as f64).sqrt().round() as usize;
    assert_eq!(side * side, dim, "images are not square");
    side
}

/// Builds the `2N x d` view tensor for one minibatch: each source sample
/// is staged through one `augment_sample` draw, then split into two
/// independent views. Per-sample rng substreams keyed on
/// `(epoch, global sample index)` make the construction order-free.
/// Caller must have validated `spec`; a valid spec cannot fail mid-draw.
fn build_view_batch(
    dataset: &Dataset,
    indices: &[usize],
    spec: &TransformSpec,
    seed_augment: u64,
    epoch: usize,
) -> Tensor {
    let dim = dataset.images().cols();
    let side = image_side(dim);
    let mut views = Tensor::zeros(2 * indices.len(), dim);
    for_each_chunk_mut(views.data_mut(), 2 * dim, |pos, out| {
        let sample = indices[pos];
        let mut r = rng::substream(seed_augment, rng::sample_stream(epoch, sample));
        let staged = augment_sample(dataset.images().row(sample), side, spec, &mut r)
            .expect("spec validated before training");
        let (a, b) =
            make_view_pair(&staged, side, spec, &mut r).expect("spec validated before training");
        out[..dim].copy_from_slice(&a);
        out[dim..].copy_from_slice(&b);
    });
    views
}

/// Self-supervised NT-Xent training. Incomplete trailing batches
/// are dropped so the denominator population stays at `2N - 1` terms.
/// Returns the trained network and the per-epoch mean batch loss.
pub fn train_contrastive(
    dataset: &Dataset,
    mut net: Network,
    spec: &TransformSpec,
    config: &ContrastiveConfig,
) -> Result<(Network, Vec<f64>)> {
    spec.validate()?;
    if net.output_dim() < 2 {
        return Err(Error::config("contrastive head needs at least 2 output units"));
    }
    if config.pairs == 0 || config.pairs > dataset.len() {
        return Err(Error::config(format!(
            "pair count {} not in [1, {}]",
            config.pairs,
            dataset.len()
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
        let plan = BatchPlan::new(dataset.len(), config.pairs, config.seed_data, epoch)?;
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, indices) in plan.full_batches().enumerate() {
            let views = build_view_batch(dataset, indices, spec, config.seed_augment, epoch);
            let trace = net.forward(&views)?;
            let z = trace.last().unwrap();
            let report = ContrastiveBatch::new(z, config.tau)
                .and_then(|cb| nt_xent_batch(&cb))
                .map_err(|e| match e {
                    Error::Numerical(msg) => {
                        Error::Numerical(format!("epoch {epoch}, batch {b}: {msg}"))
                    }
                    other => other,
                })?;
            let grads = net.backward(&views, &trace, &report.grad)?;
            let mut params = net.param_tensors_mut();
            adam.step(&mut params, &grads.tensors())?;
            epoch_loss += report.loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::config(format!(
                "no full batch of {} pairs fits {} samples",
                config.pairs,
                dataset.len()
            )));
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok((net, curve))
}
