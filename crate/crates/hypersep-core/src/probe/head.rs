//! Linear probe heads: K-way softmax classifiers trained with
//! cross-entropy on frozen representations.

use crate::data::BatchPlan;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::rng;
use crate::tensor::{axpy, Tensor};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct LinearHead {
    /// K x dim.
    pub weights: Tensor,
    /// K x 1.
    pub bias: Tensor,
}

impl LinearHead {
    /// Uniform `+-1/sqrt(dim)` weights, zero bias; same convention as the
    /// trunk initializer.
    pub fn init(k: usize, dim: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::config(format!("head needs at least 2 classes, got {k}")));
        }
        if dim == 0 {
            return Err(Error::config("head input dimension must be positive"));
        }
        let mut r = rng::seeded(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut weights = Tensor::zeros(k, dim);
        for v in weights.data_mut() {
            *v = r.random_range(-scale..scale);
        }
        Ok(LinearHead { weights, bias: Tensor::zeros(k, 1) })
    }

    pub fn k(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, reprs: &Tensor) -> Tensor {
        let mut out = reprs.matmul_nt(&self.weights);
        let bias = self.bias.data();
        let k = self.k();
        crate::parallel::for_each_chunk_mut(out.data_mut(), k, |_, row| {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        });
        out
    }

    /// Argmax class per row, ties toward the lowest index.
    pub fn predict(&self, reprs: &Tensor) -> Vec<usize> {
        let logits = self.logits(reprs);
        (0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut p = logits.clone();
    let cols = p.cols();
    crate::parallel::for_each_chunk_mut(p.data_mut(), cols, |_, row| {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row {
            *v /= sum;
        }
    });
    p
}

/// Mean negative log-likelihood and its gradient in the logits,
/// `(softmax - onehot) / B`.
pub fn cross_entropy_loss(logits: &Tensor, targets: &[u8]) -> Result<(f64, Tensor)> {
    if logits.rows() != targets.len() {
        return Err(Error::dimension(format!(
            "{} logit rows for {} targets",
            logits.rows(),
            targets.len()
        )));
    }
    let k = logits.cols();
    for (i, &t) in targets.iter().enumerate() {
        if (t as usize) >= k {
            return Err(Error::Validation(format!("target {t} at row {i} outside [0, {k})")));
        }
    }
    let b = logits.rows() as f64;
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[t as usize];
        grad.set(i, t as usize, grad.get(i, t as usize) - 1.0);
    }
    grad.scale(1.0 / b);
    Ok((loss / b, grad))
}

#[derive(Debug, Clone)]
pub struct HeadConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            epochs: 10,
            batch_size: 256,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Trains a K-way softmax head on frozen representations. Ragged final
/// batches are kept. Sequential over batches; the probe suite gets its
/// parallelism across masks, not inside a head.
pub fn train_linear_head(
    reprs: &Tensor,
    targets: &[u8],
    k: usize,
    cfg: &HeadConfig,
) -> Result<LinearHead> {
    if reprs.rows() != targets.len() {
        return Err(Error::Inconsistent(format!(
            "{} representation rows for {} targets",
            reprs.rows(),
            targets.len()
        )));
    }
    if reprs.rows() == 0 {
        return Err(Error::config("cannot train a head on an empty set"));
    }
    let mut head = LinearHead::init(k, reprs.cols(), rng::substream_seed(cfg.seed, u64::MAX))?;
    let mut adam = AdamState::new(&[head.weights.shape(), head.bias.shape()], cfg.adam)?;

    for epoch in 0..cfg.epochs {
        let plan = BatchPlan::new(
            reprs.rows(),
            cfg.batch_size.min(reprs.rows()),
            cfg.seed,
            epoch,
        )?;
        for (b, indices) in plan.batches().enumerate() {
            let x = reprs.gather_rows(indices);
            let t: Vec<u8> = indices.iter().map(|&i| targets[i]).collect();
            let logits = head.logits(&x);
            let (loss, dlogits) = cross_entropy_loss(&logits, &t)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "head epoch {epoch}, batch {b}: loss is {loss}"
                )));
            }
            let dw = dlogits.matmul_tn(&x);
            let mut db = Tensor::zeros(k, 1);
            for s in 0..dlogits.rows() {
                axpy(db.data_mut(), 1.0, dlogits.row(s));
            }
            adam.step(&mut [&mut head.weights, &mut head.bias], &[&dw, &db])?;
        }
    }
    Ok(head)
}

/// Fraction of argmax predictions differing from the target.
pub fn eval_perr(head: &LinearHead, reprs: &Tensor, targets: &[u8]) -> Result<f64> {
    if reprs.rows() != targets.len() {
        return Err(Error::Inconsistent(format!(
            "{} representation rows for {} targets",
            reprs.rows(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::config("cannot evaluate on an empty set"));
    }
    let preds = head.predict(reprs);
    let wrong = preds
        .iter()
        .zip(targets)
        .filter(|(p, t)| **p != **t as usize)
        .count();
    Ok(wrong as f64 / targets.len() as f64)
}
