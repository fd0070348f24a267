//! Mini-batch training with AdamW. Every random choice (batch order,
//! dropout, sparse edge sampling) is derived from the seed and the step
//! number, so a run resumed from a checkpoint continues exactly like an
//! uninterrupted one.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{count_matches, MatchCounts, TripleScores};
use crate::loss::LossBreakdown;
use crate::model::{GrapherModel, Prepared};
use crate::tensor::{AdamW, AdamWConfig, ParamGrads, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub max_steps: u64,
    /// Steps between dev evaluations (0 disables them).
    pub eval_interval: u64,
    pub seed: u64,
    /// Global gradient-norm clip, if any.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamWConfig::default(),
            batch_size: 10,
            max_steps: 2000,
            eval_interval: 200,
            seed: 0,
            grad_clip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// 1-based number of the step just taken.
    pub step: u64,
    /// Mean over the batch.
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

pub struct Trainer {
    model: GrapherModel,
    optimizer: AdamW,
    grads: ParamGrads,
    config: TrainConfig,
    data: Vec<Prepared>,
    step: u64,
}

const EPOCH_STREAM: u64 = 1 << 62;

impl Trainer {
    pub fn new(model: GrapherModel, data: Vec<Prepared>, config: TrainConfig) -> Result<Self> {
        let optimizer = AdamW::new(&model.params, config.optimizer);
        Trainer::resume(model, optimizer, data, config)
    }

    /// Continues from a saved optimizer state; the step count comes from it.
    pub fn resume(model: GrapherModel, mut optimizer: AdamW, data: Vec<Prepared>, config: TrainConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        if config.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        optimizer.config = config.optimizer;
        let grads = ParamGrads::zeros_like(&model.params);
        let step = optimizer.step_count();
        Ok(Trainer {
            model,
            optimizer,
            grads,
            config,
            data,
            step,
        })
    }

    pub fn model(&self) -> &GrapherModel {
        &self.model
    }

    pub fn optimizer(&self) -> &AdamW {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_parts(self) -> (GrapherModel, AdamW) {
        (self.model, self.optimizer)
    }

    /// Steps taken so far.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(EPOCH_STREAM | epoch);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Example indices of the batch for the 0-based step `step`.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.data.len() as u64;
        let b = self.config.batch_size as u64;
        let mut out = Vec::with_capacity(b as usize);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for k in step * b..(step + 1) * b {
            let epoch = k / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                cached = Some((epoch, self.epoch_order(epoch)));
            }
            out.push(cached.as_ref().expect("just set").1[(k % n) as usize]);
        }
        out
    }

    /// One optimizer step on the next batch.
    pub fn train_step(&mut self) -> Result<StepLog> {
        let batch = self.batch_indices(self.step);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.step + 1);
        let w = 1.0 / batch.len() as f64;
        let mut mean = LossBreakdown::default();
        for &i in &batch {
            let ex = &self.data[i];
            let mut t = Tape::with_params(&self.model.params);
            let (loss, b) = self
                .model
                .net
                .example_loss(&mut t, ex, Some(&mut rng))
                .map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(alloc::format!("step {}: {m}", self.step + 1)),
                    other => other,
                })?;
            t.backward_scaled(loss, w, &mut self.grads)?;
            mean.accumulate(&b, w);
        }
        let grad_norm = self.grads.global_norm();
        if let Some(clip) = self.config.grad_clip {
            if grad_norm > clip {
                self.grads.scale(clip / grad_norm);
            }
        }
        self.optimizer.step(&mut self.model.params, &mut self.grads)?;
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            loss: mean,
            grad_norm,
        })
    }

    /// Runs until `max_steps`, calling `on_step` after every step. The
    /// callback may stop training early by returning `false`.
    pub fn run<F>(&mut self, mut on_step: F) -> Result<()>
    where
        F: FnMut(&Trainer, &StepLog) -> Result<bool>,
    {
        while self.step < self.config.max_steps {
            let log = self.train_step()?;
            if !on_step(self, &log)? {
                break;
            }
        }
        Ok(())
    }
}

/// Greedy inference on every example, scored against its graph.
pub fn evaluate(model: &GrapherModel, examples: &[Prepared]) -> Result<TripleScores> {
    let mut total = MatchCounts::default();
    for ex in examples {
        let g = model.infer_graph(&ex.text)?;
        total.add(&count_matches(&g.to_triples().triples, &ex.graph.to_triples().triples));
    }
    Ok(total.scores())
}

/// Mean loss over examples without dropout or sampling.
pub fn mean_loss(model: &GrapherModel, examples: &[Prepared]) -> Result<LossBreakdown> {
    let mut mean = LossBreakdown::default();
    let w = 1.0 / examples.len().max(1) as f64;
    for ex in examples {
        mean.accumulate(&model.loss(ex)?, w);
    }
    Ok(mean)
}
