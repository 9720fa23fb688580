use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter holding a gradient. Parameters
    /// without a gradient (not reached by the loss) are left untouched.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if !params.has_grad() {
            return Err(Error::State("adam step with no populated gradients".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            if m.len() != grad.len() {
                return Err(Error::State(format!("moment shape mismatch for `{name}`")));
            }
            let values = tensor.values_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= self.lr * self.weight_decay * values[i];
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
