//! Parameter layout and the shared forward pieces: embeddings, the
//! transformer encoder/decoder, and the recurrent and MLP heads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::config::{EdgeMode, ModelConfig, NodeMode};
use crate::error::Result;
use crate::math;
use crate::tensor::nn::{causal_mask, sinusoidal_positions, GruCell, LayerNorm, Linear, MultiHeadAttention};
use crate::tensor::{ParamId, ParamStore, Tape, Var};
use crate::vocab::PAD;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncoderLayer {
    attn: MultiHeadAttention,
    ln1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DecoderLayer {
    self_attn: MultiHeadAttention,
    ln1: LayerNorm,
    cross: MultiHeadAttention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln3: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct QueryHead {
    pub queries: ParamId,
    pub init: Linear,
    pub gru: GruCell,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum EdgeHead {
    Classify { layers: [Linear; 4] },
    Generate { init: Linear, gru: GruCell, out_bias: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub tok_emb: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    pub node_out_bias: ParamId,
    pub query: Option<QueryHead>,
    pub edge: EdgeHead,
}

/// Cross-attention weights of one decoder layer and head, `[queries, keys]`.
pub(crate) struct CrossWeights {
    pub layer: usize,
    pub head: usize,
    pub weights: Var,
}

impl Layout {
    /// Registers every parameter in a fixed order; the order defines the
    /// checkpoint layout.
    pub fn build<R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut R) -> Layout {
        let d = cfg.d_model;
        let tok_emb = store.add_glorot("tok_emb", vec![cfg.vocab_size, d], rng);
        let encoder = (0..cfg.layers)
            .map(|l| {
                let p = format!("enc.{l}");
                EncoderLayer {
                    attn: MultiHeadAttention::new(store, &format!("{p}.attn"), d, cfg.heads, rng),
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), d),
                    ff1: Linear::new(store, &format!("{p}.ff1"), d, cfg.d_ff, rng),
                    ff2: Linear::new(store, &format!("{p}.ff2"), cfg.d_ff, d, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), d),
                }
            })
            .collect();
        let decoder = (0..cfg.layers)
            .map(|l| {
                let p = format!("dec.{l}");
                DecoderLayer {
                    self_attn: MultiHeadAttention::new(store, &format!("{p}.self"), d, cfg.heads, rng),
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), d),
                    cross: MultiHeadAttention::new(store, &format!("{p}.cross"), d, cfg.heads, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), d),
                    ff1: Linear::new(store, &format!("{p}.ff1"), d, cfg.d_ff, rng),
                    ff2: Linear::new(store, &format!("{p}.ff2"), cfg.d_ff, d, rng),
                    ln3: LayerNorm::new(store, &format!("{p}.ln3"), d),
                }
            })
            .collect();
        let node_out_bias = store.add_zeros("node_out.b", vec![cfg.vocab_size]);
        let query = match cfg.node_mode {
            NodeMode::Text => None,
            NodeMode::Query => Some(QueryHead {
                queries: store.add_glorot("query_emb", vec![cfg.max_nodes, d], rng),
                init: Linear::new(store, "node_head.init", d, d, rng),
                gru: GruCell::new(store, "node_head.gru", d, d, rng),
            }),
        };
        let edge = match cfg.edge_mode {
            EdgeMode::Classify => {
                let h = cfg.edge_hidden;
                EdgeHead::Classify {
                    layers: [
                        Linear::new(store, "edge_head.fc0", d, h, rng),
                        Linear::new(store, "edge_head.fc1", h, h, rng),
                        Linear::new(store, "edge_head.fc2", h, h, rng),
                        Linear::new(store, "edge_head.fc3", h, cfg.edge_classes, rng),
                    ],
                }
            }
            EdgeMode::Generate => EdgeHead::Generate {
                init: Linear::new(store, "edge_head.init", d, d, rng),
                gru: GruCell::new(store, "edge_head.gru", d, d, rng),
                out_bias: store.add_zeros("edge_head.out.b", vec![cfg.vocab_size]),
            },
        };
        Layout {
            tok_emb,
            encoder,
            decoder,
            node_out_bias,
            query,
            edge,
        }
    }

    /// Token embeddings scaled by `sqrt(d)` plus sinusoidal positions.
    pub fn embed_positions(&self, t: &mut Tape, ids: &[usize], d: usize) -> Result<Var> {
        let table = t.param(self.tok_emb);
        let e = t.embedding(table, ids)?;
        let e = t.scale(e, math::sqrt(d as f64));
        let pos = sinusoidal_positions(ids.len(), d);
        t.add_const(e, &pos)
    }

    pub fn encode(&self, t: &mut Tape, ids: &[usize], d: usize) -> Result<Var> {
        let mut x = self.embed_positions(t, ids, d)?;
        for l in &self.encoder {
            let a = l.attn.forward(t, x, x, None)?;
            let r = t.add(x, a.out)?;
            x = l.ln1.forward(t, r)?;
            let f = feed_forward(t, &l.ff1, &l.ff2, x)?;
            let r = t.add(x, f)?;
            x = l.ln2.forward(t, r)?;
        }
        Ok(x)
    }

    /// Runs the decoder stack over `x` (`[m, d]`) attending to `memory`.
    pub fn decode(&self, t: &mut Tape, mut x: Var, memory: Var, causal: bool) -> Result<(Var, Vec<CrossWeights>)> {
        let m = t.shape(x)[0];
        let mask = causal.then(|| causal_mask(m));
        let mut captured = Vec::new();
        for (li, l) in self.decoder.iter().enumerate() {
            let a = l.self_attn.forward(t, x, x, mask.as_deref())?;
            let r = t.add(x, a.out)?;
            x = l.ln1.forward(t, r)?;
            let c = l.cross.forward(t, x, memory, None)?;
            for (h, w) in c.weights.into_iter().enumerate() {
                captured.push(CrossWeights {
                    layer: li,
                    head: h,
                    weights: w,
                });
            }
            let r = t.add(x, c.out)?;
            x = l.ln2.forward(t, r)?;
            let f = feed_forward(t, &l.ff1, &l.ff2, x)?;
            let r = t.add(x, f)?;
            x = l.ln3.forward(t, r)?;
        }
        Ok((x, captured))
    }

    /// Tied output projection: `h · Eᵀ + b`.
    pub fn project(&self, t: &mut Tape, h: Var, bias: ParamId) -> Result<Var> {
        let table = t.param(self.tok_emb);
        let logits = t.matmul_t(h, table)?;
        let b = t.param(bias);
        t.add_row(logits, b)
    }

    /// Teacher-forced recurrent decoding of `rows` sequences at once.
    ///
    /// `init` maps the row features (`[rows, d]`) to the initial state;
    /// `inputs[s]` holds the token fed at step `s` for every row. Returns
    /// step-major logits `[steps · rows, V]`.
    pub fn recurrent_logits(
        &self,
        t: &mut Tape,
        features: Var,
        init: &Linear,
        gru: &GruCell,
        out_bias: ParamId,
        inputs: &[Vec<usize>],
    ) -> Result<Var> {
        let rows = t.shape(features)[0];
        let h0 = init.forward(t, features)?;
        let mut h = t.tanh(h0);
        let flat: Vec<usize> = inputs.iter().flatten().copied().collect();
        let table = t.param(self.tok_emb);
        let emb = t.embedding(table, &flat)?;
        let gx = gru.input.forward(t, emb)?;
        let mut states = Vec::with_capacity(inputs.len());
        for s in 0..inputs.len() {
            let gs = t.slice_rows(gx, s * rows, rows)?;
            h = gru.step_projected(t, gs, h)?;
            states.push(h);
        }
        let all = if states.len() == 1 { states[0] } else { t.concat_rows(&states)? };
        self.project(t, all, out_bias)
    }

    /// Greedy recurrent decoding, values only. Returns the tokens of each row
    /// (stopping at the end token, which is not included) and, if requested,
    /// each row's `[steps, V]` logits.
    pub fn recurrent_greedy(
        &self,
        t: &mut Tape,
        features: Var,
        init: &Linear,
        gru: &GruCell,
        out_bias: ParamId,
        steps: usize,
        keep_logits: bool,
    ) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
        let rows = t.shape(features)[0];
        let h0 = init.forward(t, features)?;
        let mut h = t.tanh(h0);
        let mut prev = vec![PAD; rows];
        let mut done = vec![false; rows];
        let mut tokens = vec![Vec::new(); rows];
        let mut logits_out = vec![Vec::new(); if keep_logits { rows } else { 0 }];
        let table = t.param(self.tok_emb);
        for _ in 0..steps {
            let x = t.embedding(table, &prev)?;
            h = gru.forward(t, x, h)?;
            let lg = self.project(t, h, out_bias)?;
            let vals = t.value(lg);
            let v = vals.len() / rows.max(1);
            for r in 0..rows {
                let row = &vals[r * v..(r + 1) * v];
                let best = argmax(row);
                if keep_logits {
                    logits_out[r].extend_from_slice(row);
                }
                if !done[r] {
                    if best == crate::vocab::EOS {
                        done[r] = true;
                    } else {
                        tokens[r].push(best);
                    }
                }
                prev[r] = best;
            }
        }
        Ok((tokens, logits_out))
    }

    /// The four-layer classification MLP; dropout masks are drawn from
    /// `rng` when given.
    pub fn classify(&self, t: &mut Tape, pair: Var, dropout: f64, mut rng: Option<&mut dyn RngCore>) -> Result<Var> {
        let EdgeHead::Classify { layers } = &self.edge else {
            unreachable!("classify called on a generating edge head")
        };
        let mut x = pair;
        for (k, layer) in layers.iter().enumerate() {
            x = layer.forward(t, x)?;
            if k < 3 {
                x = t.relu(x);
                if let Some(r) = rng.as_deref_mut() {
                    if dropout > 0.0 {
                        let keep = 1.0 - dropout;
                        let n: usize = t.shape(x).iter().product();
                        let mask = (0..n).map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                        x = t.mul_const(x, mask)?;
                    }
                }
            }
        }
        Ok(x)
    }
}

fn feed_forward(t: &mut Tape, ff1: &Linear, ff2: &Linear, x: Var) -> Result<Var> {
    let h = ff1.forward(t, x)?;
    let h = t.relu(h);
    ff2.forward(t, h)
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
