use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{powi, sqrt};
use crate::nn::{ParamId, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// DCGAN settings.
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed subset of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    ids: Vec<ParamId>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet, ids: Vec<ParamId>) -> Self {
        let first = ids.iter().map(|id| Tensor::zeros(params.value(*id).shape())).collect::<Vec<_>>();
        let second = first.clone();
        Self { config, ids, first, second, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - powi(beta1, self.step as i32);
        let c2 = 1.0 - powi(beta2, self.step as i32);
        for (k, id) in self.ids.iter().enumerate() {
            let grad = params.grad(*id).data().to_vec();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let value = params.value_mut(*id).data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
        params.zero_grads_of(&self.ids);
    }
}
