//! Central finite-difference verification of backpropagated gradients.

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;
use std::collections::HashSet;

/// Compares analytic parameter gradients against central finite differences
/// on a sampled parameter subset and returns the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
///
/// `loss` maps last-layer outputs to `(loss value, d loss / d outputs)`;
/// only the value is used on the numeric side, so the comparison stays
/// independent of the analytic path.
pub fn grad_check<F>(
    net: &Network,
    batch: &Tensor,
    loss: F,
    h: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    if h <= 0.0 {
        return Err(Error::config(format!("finite-difference step must be positive, got {h}")));
    }
    if samples_per_tensor == 0 {
        return Err(Error::config("samples_per_tensor must be at least 1"));
    }

    let trace = net.forward(batch)?;
    let (loss0, output_grad) = loss(trace.last().unwrap())?;
    if !loss0.is_finite() {
        return Err(Error::Numerical(format!("loss is not finite: {loss0}")));
    }
    let analytic = net.backward(batch, &trace, &output_grad)?;
    let analytic_tensors = analytic.tensors();

    let mut probe = net.clone();
    let mut rng = rng::seeded(seed);
    let mut max_rel: f64 = 0.0;

    for (ti, grad) in analytic_tensors.iter().enumerate() {
        let len = grad.len();
        let picks: Vec<usize> = if len <= samples_per_tensor {
            (0..len).collect()
        } else {
            let mut seen = HashSet::new();
            while seen.len() < samples_per_tensor {
                seen.insert(rng.random_range(0..len));
            }
            let mut v: Vec<usize> = seen.into_iter().collect();
            v.sort_unstable();
            v
        };

        for idx in picks {
            let eval = |probe: &mut Network, delta: f64| -> Result<f64> {
                probe.param_tensors_mut()[ti].data_mut()[idx] += delta;
                let out = probe.forward(batch)?;
                let (l, _) = loss(out.last().unwrap())?;
                probe.param_tensors_mut()[ti].data_mut()[idx] -= delta;
                if !l.is_finite() {
                    return Err(Error::Numerical(format!("perturbed loss is not finite: {l}")));
                }
                Ok(l)
            };
            let plus = eval(&mut probe, h)?;
            let minus = eval(&mut probe, -h)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L = mean(y^2), dL/dy = 2y/n.
    fn quadratic_loss(y: &Tensor) -> Result<(f64, Tensor)> {
        let n = y.len() as f64;
        let l = y.data().iter().map(|v| v * v).sum::<f64>() / n;
        let g = Tensor::from_vec(
            y.rows(),
            y.cols(),
            y.data().iter().map(|v| 2.0 * v / n).collect(),
        )?;
        Ok((l, g))
    }

    #[test]
    fn linear_net_quadratic_loss_is_nearly_exact() {
        let net = Network::init(
            &[4, 3],
            &[crate::nn::Activation::Identity],
            2,
        )
        .unwrap();
        let batch = Tensor::from_rows(&[
            vec![0.3, -0.7, 0.2, 0.9],
            vec![-0.1, 0.4, -0.6, 0.5],
        ])
        .unwrap();
        let err = grad_check(&net, &batch, quadratic_loss, 1e-5, 64, 0).unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn relu_net_matches_finite_differences() {
        for seed in [1, 2, 3] {
            let net = Network::feedforward(&[6, 5, 4], seed).unwrap();
            let batch = {
                let mut rng = crate::rng::seeded(seed + 100);
                use rand::Rng;
                Tensor::from_vec(
                    4,
                    6,
                    (0..24).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            };
            let err = grad_check(&net, &batch, quadratic_loss, 1e-5, 64, seed).unwrap();
            assert!(err < 1e-6, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn zero_step_is_rejected() {
        let net = Network::feedforward(&[2, 2], 0).unwrap();
        let batch = Tensor::zeros(1, 2);
        assert!(matches!(
            grad_check(&net, &batch, quadratic_loss, 0.0, 4, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let net = Network::feedforward(&[2, 2], 0).unwrap();
        let batch = Tensor::zeros(1, 2);
        let bad = |_: &Tensor| Ok((f64::INFINITY, Tensor::zeros(1, 2)));
        assert!(matches!(
            grad_check(&net, &batch, bad, 1e-5, 4, 0),
            Err(Error::Numerical(_))
        ));
    }
}
