use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{numel, Tensor};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialization: U(-a, a), a = sqrt(6 / (fan_in + fan_out)),
    /// with fan_in/fan_out taken from the first and last axes.
    pub fn add_glorot<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: Vec<usize>, rng: &mut R) -> ParamId {
        let fan_in = shape.first().copied().unwrap_or(1);
        let fan_out = shape.last().copied().unwrap_or(1);
        let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..numel(&shape)).map(|_| rng.gen_range(-a..a)).collect();
        self.add(name, Tensor { shape, data })
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: Vec<usize>, x: f64) -> ParamId {
        let n = numel(&shape);
        self.add(name, Tensor { shape, data: vec![x; n] })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient buffers shaped like a [`ParamStore`]. Backward passes add into them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        ParamGrads {
            grads: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        math::sqrt(self.grads.iter().flatten().map(|g| g * g).sum())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            *g *= s;
        }
    }
}
