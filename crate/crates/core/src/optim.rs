//! AdamW with decoupled weight decay over flat parameter groups.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Optimizer state. Each parameter group is registered once with its length
/// and keeps its own moment buffers.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, group_sizes: &[usize]) -> Self {
        AdamW {
            config,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Advance the step counter; call once before updating the groups of a step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Apply one update to `params` from `grads`. `lr == 0` leaves the
    /// parameters bit-identical.
    pub fn update(&mut self, group: usize, params: &mut [f64], grads: &[f64], lr: f64) {
        self.update_with_decay(group, params, grads, lr, self.config.weight_decay);
    }

    pub fn update_with_decay(&mut self, group: usize, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        assert!(self.step > 0, "begin_step must be called before update");
        let AdamWConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let m = &mut self.m[group];
        let v = &mut self.v[group];
        assert_eq!(m.len(), params.len());
        assert_eq!(grads.len(), params.len());
        if lr == 0.0 {
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            }
            return;
        }
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            params[i] -= lr * weight_decay * params[i];
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
