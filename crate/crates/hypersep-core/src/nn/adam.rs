//! ADAM optimizer with the standard bias-corrected update.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamConfig {
            alpha,
            ..AdamConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config(format!(
                "adam betas must lie in (0,1), got {} / {}",
                self.beta1, self.beta2
            )));
        }
        if self.alpha <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::config("adam alpha and epsilon must be positive"));
        }
        Ok(())
    }
}

/// First/second moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdamState {
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            t: 0,
            cfg,
        })
    }

    pub fn for_params(params: &[&Tensor], cfg: AdamConfig) -> Result<Self> {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        AdamState::new(&shapes, cfg)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// One bias-corrected update of every parameter tensor in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Internal(format!(
                "adam state tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::Internal(format!(
                    "adam shape mismatch: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }

        self.t += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for ((pi, &gi), (mi, vi)) in pd
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= alpha * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
