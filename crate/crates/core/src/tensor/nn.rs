//! Layers built from tape operations: linear maps, layer norm, multi-head
//! attention and a GRU cell. Each layer only stores parameter ids; the values
//! are read through the tape's parameter store.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::math;

/// Additive mask value for excluded attention positions.
pub const MASKED: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let w = store.add_glorot(format!("{name}.w"), alloc::vec![d_in, d_out], rng);
        let b = store.add_zeros(format!("{name}.b"), alloc::vec![d_out]);
        Linear { w, b, d_in, d_out }
    }

    /// `x · W + b` for `x` of shape `[rows, d_in]`.
    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let w = t.param(self.w);
        let b = t.param(self.b);
        let y = t.matmul(x, w)?;
        t.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNorm {
            gain: store.add_filled(format!("{name}.gain"), alloc::vec![d], 1.0),
            bias: store.add_zeros(format!("{name}.bias"), alloc::vec![d]),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let g = t.param(self.gain);
        let b = t.param(self.bias);
        t.layer_norm(x, g, b, Self::EPS)
    }
}

/// Multi-head scaled dot-product attention with input and output projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

/// Attention output plus the post-softmax weights of each head (`[queries, keys]`).
pub struct AttentionOutput {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && d % heads == 0, "width {d} not divisible by {heads} heads");
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    /// `queries` is `[m, d]`, `keys` is `[n, d]`; `mask`, when given, is an
    /// `m × n` additive mask shared by all heads.
    pub fn forward(&self, t: &mut Tape, queries: Var, keys: Var, mask: Option<&[f64]>) -> Result<AttentionOutput> {
        let q = self.q.forward(t, queries)?;
        let k = self.k.forward(t, keys)?;
        let v = self.v.forward(t, keys)?;
        let d = self.q.d_out;
        let dh = d / self.heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut ctx = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (t.slice_cols(q, h * dh, dh)?, t.slice_cols(k, h * dh, dh)?, t.slice_cols(v, h * dh, dh)?)
            };
            let s = t.matmul_t(qh, kh)?;
            let mut s = t.scale(s, scale);
            if let Some(m) = mask {
                s = t.add_const(s, m)?;
            }
            let a = t.softmax(s);
            weights.push(a);
            ctx.push(t.matmul(a, vh)?);
        }
        let joined = if ctx.len() == 1 { ctx[0] } else { t.concat_cols(&ctx)? };
        let out = self.o.forward(t, joined)?;
        Ok(AttentionOutput { out, weights })
    }
}

/// `m × m` causal mask: position `i` sees positions `0..=i`.
pub fn causal_mask(m: usize) -> Vec<f64> {
    let mut mask = alloc::vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            mask[i * m + j] = MASKED;
        }
    }
    mask
}

/// Gated recurrent unit, batched over rows:
///
/// ```text
/// r  = σ(x W_r + b_r + h U_r + c_r)
/// z  = σ(x W_z + b_z + h U_z + c_z)
/// n  = tanh(x W_n + b_n + r ⊙ (h U_n + c_n))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub input: Linear,
    pub hidden: Linear,
    pub d_hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_in: usize, d_hidden: usize, rng: &mut R) -> Self {
        GruCell {
            input: Linear::new(store, &format!("{name}.x"), d_in, 3 * d_hidden, rng),
            hidden: Linear::new(store, &format!("{name}.h"), d_hidden, 3 * d_hidden, rng),
            d_hidden,
        }
    }

    /// One step: `x` is `[rows, d_in]`, `h` is `[rows, d_hidden]`.
    pub fn forward(&self, t: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let gx = self.input.forward(t, x)?;
        self.step_projected(t, gx, h)
    }

    /// One step with the input projection `x W + b` already computed
    /// (`[rows, 3 · d_hidden]`), so a whole teacher-forced sequence can be
    /// projected in one product.
    pub fn step_projected(&self, t: &mut Tape, gx: Var, h: Var) -> Result<Var> {
        let dh = self.d_hidden;
        let gh = self.hidden.forward(t, h)?;
        let xr = t.slice_cols(gx, 0, dh)?;
        let xz = t.slice_cols(gx, dh, dh)?;
        let xn = t.slice_cols(gx, 2 * dh, dh)?;
        let hr = t.slice_cols(gh, 0, dh)?;
        let hz = t.slice_cols(gh, dh, dh)?;
        let hn = t.slice_cols(gh, 2 * dh, dh)?;
        let r = t.add(xr, hr)?;
        let r = t.sigmoid(r);
        let z = t.add(xz, hz)?;
        let z = t.sigmoid(z);
        let rn = t.mul(r, hn)?;
        let n = t.add(xn, rn)?;
        let n = t.tanh(n);
        let omz = t.one_minus(z);
        let a = t.mul(omz, n)?;
        let b = t.mul(z, h)?;
        t.add(a, b)
    }
}

/// Sinusoidal position table, `[len, d]`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let freq = math::powf(10000.0, -(2.0 * i as f64) / d as f64);
            let a = pos as f64 * freq;
            out[pos * d + 2 * i] = math::sin(a);
            out[pos * d + 2 * i + 1] = math::cos(a);
        }
    }
    out
}
