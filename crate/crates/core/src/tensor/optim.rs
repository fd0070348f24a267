use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ParamGrads, ParamStore};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Adam with decoupled weight decay. Decay is applied to the weights before
/// the moment update, as in the common reference implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        AdamW {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Rebuilds an optimizer from saved moments (used when resuming).
    pub fn from_state(config: AdamWConfig, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step: u64) -> Self {
        AdamW { config, m, v, step }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Applies one update and zeroes `grads`. Non-finite gradients abort the
    /// step before any parameter is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &mut ParamGrads) -> Result<()> {
        if self.m.len() != store.len() || grads.len() != store.len() {
            return Err(Error::config("optimizer state does not match the parameter store"));
        }
        for id in store.ids() {
            if grads.get(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient for parameter {}", store.name(id))));
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - math::powf(c.beta1, self.step as f64);
        let bc2 = 1.0 - math::powf(c.beta2, self.step as f64);
        for id in store.ids() {
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let w = store.get_mut(id).data_mut();
            for k in 0..w.len() {
                w[k] *= 1.0 - c.lr * c.weight_decay;
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                w[k] -= c.lr * mhat / (math::sqrt(vhat) + c.eps);
            }
        }
        grads.zero();
        Ok(())
    }
}
