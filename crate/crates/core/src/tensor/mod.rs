//! Dense f64 tensors with a define-by-run tape for reverse-mode gradients.
//!
//! Values live on a [`Tape`]; operations return [`Var`] handles and record
//! how to push gradients back. Parameters are held in a [`ParamStore`] that
//! the tape borrows, so a forward pass never copies weights.

mod gradcheck;
mod kernels;
pub mod nn;
mod optim;
mod params;
mod tape;

use alloc::vec::Vec;

pub use gradcheck::{grad_check, grad_check_params, GradCheck, GradCheckReport};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Param, ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::log_softmax_in_place;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `(rows, cols)` view of a shape: the last axis is `cols`, everything
/// before it is folded into `rows`.
pub(crate) fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [init @ .., last] => (numel(init), *last),
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> crate::Result<Tensor> {
        if numel(&shape) != data.len() {
            return Err(crate::Error::shape(
                "tensor",
                alloc::format!("shape {:?} needs {} values, got {}", shape, numel(&shape), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = numel(&shape);
        Tensor {
            shape,
            data: alloc::vec![0.0; n],
        }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor {
            shape: Vec::new(),
            data: alloc::vec![x],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> crate::Result<Tensor> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(crate::Error::shape("tensor", "ragged rows"));
        }
        Ok(Tensor {
            shape: alloc::vec![rows.len(), cols],
            data: rows.concat(),
        })
    }

    pub fn eye(n: usize) -> Tensor {
        let mut t = Tensor::zeros(alloc::vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = rows_cols(&self.shape);
        &self.data[r * c..(r + 1) * c]
    }
}
