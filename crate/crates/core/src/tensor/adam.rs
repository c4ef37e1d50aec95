//! Adam optimizer with bias correction.

use super::Tensor;
use crate::error::{CoreError, Result};

/// Per-parameter first/second moment buffers plus hyperparameters.
/// `beta1 = 0.5` is the adversarial-training default here; the learning
/// rate default of 1e-4 matches the simulation protocol.
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step counter; increments by exactly 1 per successful step.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    /// One Adam update over `params`, reading each tensor's accumulated
    /// gradient. Gradients are left untouched; callers reset them between
    /// steps. A non-finite gradient aborts before any parameter changes.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(CoreError::Config(format!(
                "adam: state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        let grads: Vec<Vec<f64>> = params.iter().map(|p| p.grad_to_vec()).collect();
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if g.len() != self.m[i].len() {
                return Err(CoreError::Shape(format!(
                    "adam: parameter {i} shape changed ({} vs {} elements)",
                    g.len(),
                    self.m[i].len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Numeric(format!(
                    "adam: step aborted, non-finite gradient in parameter {i} (shape {:?})",
                    p.shape()
                )));
            }
        }

        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut data = p.to_vec();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.set_data(&data);
        }
        Ok(())
    }
}
