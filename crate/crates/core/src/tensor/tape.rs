use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{axpy, dot, gemm_nn, gemm_nt, gemm_tn};
use super::params::{ParamGrads, ParamId, ParamStore};
use super::{numel, rows_cols, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Vec<f64>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    OneMinus(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Embedding(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    PoolRows(Var, Vec<Vec<usize>>),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    Pick(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    Focal(Var, f64),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Value,
    op: Op,
}

/// Define-by-run recording of a computation. One tape per forward pass;
/// confined to the thread that built it.
pub struct Tape<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients of one backward pass for every recorded value.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v` (zeros if unreachable).
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn dims2(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match s {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape without parameters (inputs only).
    pub fn new() -> Tape<'static> {
        Tape {
            params: None,
            nodes: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Tape<'p> {
        Tape {
            params: Some(params),
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; params.len()],
        }
    }

    /// The parameter store this tape reads from.
    pub fn params(&self) -> Option<&'p ParamStore> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(d) => d,
            Value::Param(id) => self.params.expect("param node without store").get(*id).data(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.value(v).to_vec(),
        }
    }

    /// Fails when `v` holds NaN or an infinity.
    pub fn check_finite(&self, v: Var, what: &str) -> Result<()> {
        if self.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical(format!("non-finite values in {what}")))
        }
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.shape, t.data, Op::Leaf)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(t))
    }

    /// The parameter `id` of the borrowed store. Repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let store = self.params.expect("tape has no parameter store");
        self.nodes.push(Node {
            shape: store.get(id).shape().to_vec(),
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul_t", self.shape(a))?;
        let (n, k2) = dims2("matmul_t", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape("matmul_t", format!("[{m}, {k}] x [{n}, {k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(m, k, n, self.value(a), self.value(b), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMulT(a, b)))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        check_same(op, self.shape(a), self.shape(b))?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(self.shape(a).to_vec(), out, rec))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a row vector (`[n]` or `[1, n]`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(a));
        if numel(self.shape(row)) != c {
            return Err(Error::shape("add_row", format!("{:?} + row {:?}", self.shape(a), self.shape(row))));
        }
        let mut out = self.value(a).to_vec();
        let bias = self.value(row);
        for i in 0..r {
            for (o, b) in out[i * c..(i + 1) * c].iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, row)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(self.shape(a).to_vec(), out, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Adds a constant of the same shape (e.g. an attention mask).
    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Result<Var> {
        if c.len() != numel(self.shape(a)) {
            return Err(Error::shape("add_const", format!("{:?} + {} constants", self.shape(a), c.len())));
        }
        let out = self.value(a).iter().zip(c).map(|(x, y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddConst(a)))
    }

    /// Multiplies by a constant of the same shape (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        if c.len() != numel(self.shape(a)) {
            return Err(Error::shape("mul_const", format!("{:?} * {} constants", self.shape(a), c.len())));
        }
        let out = self.value(a).iter().zip(&c).map(|(x, y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::MulConst(a, c)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, math::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, math::sigmoid, Op::Sigmoid(a))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, math::exp, Op::Exp(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = rows_cols(self.shape(a));
        let mut out = self.value(a).to_vec();
        for i in 0..r {
            softmax_in_place(&mut out[i * c..(i + 1) * c]);
        }
        self.push(self.shape(a).to_vec(), out, Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = rows_cols(self.shape(a));
        let mut out = self.value(a).to_vec();
        for i in 0..r {
            log_softmax_in_place(&mut out[i * c..(i + 1) * c]);
        }
        self.push(self.shape(a).to_vec(), out, Op::LogSoftmax(a))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = rows_cols(self.shape(x));
        if numel(self.shape(gain)) != c || numel(self.shape(bias)) != c {
            return Err(Error::shape(
                "layer_norm",
                format!("{:?} with gain {:?}, bias {:?}", self.shape(x), self.shape(gain), self.shape(bias)),
            ));
        }
        let xs = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / math::sqrt(var + eps);
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = dims2("embedding", self.shape(table))?;
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("embedding", format!("id {bad} out of range for {v} rows")));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        Ok(self.push(vec![ids.len(), d], out, Op::Embedding(table, ids.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let (r, _) = dims2("concat_cols", self.shape(first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = dims2("concat_cols", self.shape(p))?;
            if pr != r {
                return Err(Error::shape("concat_cols", format!("row counts {r} and {pr}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; r * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p);
            for i in 0..r {
                out[i * total + off..i * total + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(vec![r, total], out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let (_, c) = dims2("concat_rows", self.shape(first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = dims2("concat_rows", self.shape(p))?;
            if pc != c {
                return Err(Error::shape("concat_rows", format!("column counts {c} and {pc}")));
            }
            rows += pr;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, c], out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims2("slice_cols", self.shape(a))?;
        if start + len > c {
            return Err(Error::shape("slice_cols", format!("cols {start}..{} of {c}", start + len)));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(vec![r, len], out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims2("slice_rows", self.shape(a))?;
        if start + len > r {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {r}", start + len)));
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(vec![len, c], out, Op::SliceRows(a, start)))
    }

    /// Row `k` of the result is row `idx[k]` of `a`. Rows may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = dims2("gather_rows", self.shape(a))?;
        if let Some(bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(vec![idx.len(), c], out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Row `g` of the result is the mean of the rows of `a` listed in
    /// `groups[g]`; an empty group gives a zero row.
    pub fn pool_rows(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (r, c) = dims2("pool_rows", self.shape(a))?;
        if let Some(bad) = groups.iter().flatten().find(|&&i| i >= r) {
            return Err(Error::shape("pool_rows", format!("row {bad} of {r}")));
        }
        let src = self.value(a);
        let mut out = vec![0.0; groups.len() * c];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let w = 1.0 / g.len() as f64;
            let dst = &mut out[gi * c..(gi + 1) * c];
            for &i in g {
                for (o, x) in dst.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                    *o += x;
                }
            }
            dst.iter_mut().for_each(|o| *o *= w);
        }
        Ok(self.push(vec![groups.len(), c], out, Op::PoolRows(a, groups)))
    }

    /// Mean over rows: `[r, c] -> [1, c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2("mean_rows", self.shape(a))?;
        if r == 0 {
            return Err(Error::shape("mean_rows", "no rows"));
        }
        let src = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        Ok(self.push(vec![1, c], out, Op::MeanRows(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = numel(self.shape(a));
        if n == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let s = self.value(a).iter().sum::<f64>() / n as f64;
        Ok(self.push(Vec::new(), vec![s], Op::Mean(a)))
    }

    /// Flat-index selection: `out[k] = a.flat[idx[k]]`.
    pub fn pick(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let n = numel(self.shape(a));
        if let Some(bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("pick", format!("index {bad} of {n}")));
        }
        let src = self.value(a);
        let out = idx.iter().map(|&i| src[i]).collect();
        Ok(self.push(vec![idx.len()], out, Op::Pick(a, idx)))
    }

    /// Mean of the entries sharing a segment id: `out[s] = mean{a[k] : seg[k] == s}`.
    pub fn segment_mean(&mut self, a: Var, seg: Vec<usize>, segments: usize) -> Result<Var> {
        let n = numel(self.shape(a));
        if seg.len() != n {
            return Err(Error::shape("segment_mean", format!("{n} values, {} segment ids", seg.len())));
        }
        let mut counts = vec![0usize; segments];
        for &s in &seg {
            if s >= segments {
                return Err(Error::shape("segment_mean", format!("segment {s} of {segments}")));
            }
            counts[s] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::shape("segment_mean", "empty segment"));
        }
        let mut out = vec![0.0; segments];
        for (x, &s) in self.value(a).iter().zip(&seg) {
            out[s] += x;
        }
        for (o, &c) in out.iter_mut().zip(&counts) {
            *o /= c as f64;
        }
        Ok(self.push(vec![segments], out, Op::SegmentMean(a, seg, counts)))
    }

    /// Focal loss applied elementwise to log-probabilities `l = log p_t`:
    /// `-(1 - p_t)^gamma * l`. With `gamma = 0` this is exactly `-l`.
    pub fn focal(&mut self, logp: Var, gamma: f64) -> Var {
        self.map(logp, |l| focal_value(l, gamma), Op::Focal(logp, gamma))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != numel(self.shape(a)) {
            return Err(Error::shape("reshape", format!("{:?} -> {:?}", self.shape(a), shape)));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(shape, out, Op::Reshape(a)))
    }

    /// Accumulates `d loss / d param` into `grads` for every parameter reachable from `loss`.
    pub fn backward(&self, loss: Var, grads: &mut ParamGrads) -> Result<()> {
        self.backward_scaled(loss, 1.0, grads)
    }

    /// As [`Tape::backward`], seeding the loss gradient with `seed` instead of 1.
    pub fn backward_scaled(&self, loss: Var, seed: f64, grads: &mut ParamGrads) -> Result<()> {
        let all = self.run_backward(loss, seed)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &all[i]) {
                axpy(1.0, g, grads.get_mut(*id));
            }
        }
        Ok(())
    }

    /// Gradients of a scalar `loss` with respect to every recorded value.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        Ok(Gradients {
            grads: self.run_backward(loss, 1.0)?,
        })
    }

    fn run_backward(&self, loss: Var, seed: f64) -> Result<Vec<Option<Vec<f64>>>> {
        if numel(self.shape(loss)) != 1 {
            return Err(Error::shape("backward", format!("loss must be a scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![seed]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            // leaves keep their gradient for the caller
            if matches!(self.nodes[i].op, Op::Leaf | Op::Param(_)) {
                grads[i] = Some(g);
            }
        }
        Ok(grads)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = self.value(Var(i));
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(self.shape(*a));
                let n = node.shape[1];
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = dC · Bᵀ
                gemm_nt(m, n, k, g, bv, acc(grads, *a, m * k));
                // dB = Aᵀ · dC
                gemm_tn(m, k, n, av, g, acc(grads, *b, k * n));
            }
            Op::MatMulT(a, b) => {
                let (m, k) = rows_cols(self.shape(*a));
                let n = node.shape[1];
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = dC · B
                gemm_nn(m, n, k, g, bv, acc(grads, *a, m * k));
                // dB = dCᵀ · A
                gemm_tn(m, n, k, g, av, acc(grads, *b, n * k));
            }
            Op::Add(a, b) => {
                axpy(1.0, g, acc(grads, *a, g.len()));
                axpy(1.0, g, acc(grads, *b, g.len()));
            }
            Op::Sub(a, b) => {
                axpy(1.0, g, acc(grads, *a, g.len()));
                axpy(-1.0, g, acc(grads, *b, g.len()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * bv[k];
                }
                let gb = acc(grads, *b, g.len());
                for k in 0..g.len() {
                    gb[k] += g[k] * av[k];
                }
            }
            Op::AddRow(a, row) => {
                axpy(1.0, g, acc(grads, *a, g.len()));
                let c = numel(self.shape(*row));
                let gr = acc(grads, *row, c);
                for chunk in g.chunks_exact(c) {
                    axpy(1.0, chunk, gr);
                }
            }
            Op::Scale(a, s) => axpy(*s, g, acc(grads, *a, g.len())),
            Op::AddConst(a) => axpy(1.0, g, acc(grads, *a, g.len())),
            Op::MulConst(a, c) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * c[k];
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    if av[k] > 0.0 {
                        ga[k] += g[k];
                    }
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * (1.0 - out[k] * out[k]);
                }
            }
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }
            Op::OneMinus(a) => axpy(-1.0, g, acc(grads, *a, g.len())),
            Op::Exp(a) => {
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * out[k];
                }
            }
            Op::Softmax(a) => {
                let (r, c) = rows_cols(&node.shape);
                let ga = acc(grads, *a, g.len());
                for i in 0..r {
                    let y = &out[i * c..(i + 1) * c];
                    let gy = &g[i * c..(i + 1) * c];
                    let s = dot(gy, y);
                    for j in 0..c {
                        ga[i * c + j] += y[j] * (gy[j] - s);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let (r, c) = rows_cols(&node.shape);
                let ga = acc(grads, *a, g.len());
                for i in 0..r {
                    let y = &out[i * c..(i + 1) * c];
                    let gy = &g[i * c..(i + 1) * c];
                    let s: f64 = gy.iter().sum();
                    for j in 0..c {
                        ga[i * c + j] += gy[j] - math::exp(y[j]) * s;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (r, c) = rows_cols(&node.shape);
                let gv = self.value(*gain);
                {
                    let gg = acc(grads, *gain, c);
                    for i in 0..r {
                        for j in 0..c {
                            gg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                }
                {
                    let gb = acc(grads, *bias, c);
                    for chunk in g.chunks_exact(c) {
                        axpy(1.0, chunk, gb);
                    }
                }
                let gx = acc(grads, *x, r * c);
                let mut dxhat = vec![0.0; c];
                for i in 0..r {
                    let xh = &xhat[i * c..(i + 1) * c];
                    for j in 0..c {
                        dxhat[j] = g[i * c + j] * gv[j];
                    }
                    let m1 = dxhat.iter().sum::<f64>() / c as f64;
                    let m2 = dot(&dxhat, xh) / c as f64;
                    for j in 0..c {
                        gx[i * c + j] += rstd[i] * (dxhat[j] - m1 - xh[j] * m2);
                    }
                }
            }
            Op::Embedding(table, ids) => {
                let (v, d) = rows_cols(self.shape(*table));
                let gt = acc(grads, *table, v * d);
                for (r, &id) in ids.iter().enumerate() {
                    axpy(1.0, &g[r * d..(r + 1) * d], &mut gt[id * d..(id + 1) * d]);
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = rows_cols(&node.shape);
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let gp = acc(grads, p, r * w);
                    for i in 0..r {
                        axpy(1.0, &g[i * total + off..i * total + off + w], &mut gp[i * w..(i + 1) * w]);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = numel(self.shape(p));
                    axpy(1.0, &g[off..off + n], acc(grads, p, n));
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = rows_cols(self.shape(*a));
                let len = node.shape[1];
                let ga = acc(grads, *a, r * c);
                for i in 0..r {
                    axpy(1.0, &g[i * len..(i + 1) * len], &mut ga[i * c + start..i * c + start + len]);
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = rows_cols(self.shape(*a));
                let ga = acc(grads, *a, r * c);
                axpy(1.0, g, &mut ga[start * c..start * c + g.len()]);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = rows_cols(self.shape(*a));
                let ga = acc(grads, *a, r * c);
                for (k, &src) in idx.iter().enumerate() {
                    axpy(1.0, &g[k * c..(k + 1) * c], &mut ga[src * c..(src + 1) * c]);
                }
            }
            Op::PoolRows(a, groups) => {
                let (r, c) = rows_cols(self.shape(*a));
                let ga = acc(grads, *a, r * c);
                for (gi, grp) in groups.iter().enumerate() {
                    if grp.is_empty() {
                        continue;
                    }
                    let w = 1.0 / grp.len() as f64;
                    for &src in grp {
                        axpy(w, &g[gi * c..(gi + 1) * c], &mut ga[src * c..(src + 1) * c]);
                    }
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = rows_cols(self.shape(*a));
                let ga = acc(grads, *a, r * c);
                let w = 1.0 / r as f64;
                for i in 0..r {
                    axpy(w, g, &mut ga[i * c..(i + 1) * c]);
                }
            }
            Op::Sum(a) => {
                let n = numel(self.shape(*a));
                acc(grads, *a, n).iter_mut().for_each(|x| *x += g[0]);
            }
            Op::Mean(a) => {
                let n = numel(self.shape(*a));
                let w = g[0] / n as f64;
                acc(grads, *a, n).iter_mut().for_each(|x| *x += w);
            }
            Op::Pick(a, idx) => {
                let n = numel(self.shape(*a));
                let ga = acc(grads, *a, n);
                for (k, &src) in idx.iter().enumerate() {
                    ga[src] += g[k];
                }
            }
            Op::SegmentMean(a, seg, counts) => {
                let n = numel(self.shape(*a));
                let ga = acc(grads, *a, n);
                for (k, &s) in seg.iter().enumerate() {
                    ga[k] += g[s] / counts[s] as f64;
                }
            }
            Op::Focal(a, gamma) => {
                let av = self.value(*a);
                let ga = acc(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * focal_derivative(av[k], *gamma);
                }
            }
            Op::Reshape(a) => axpy(1.0, g, acc(grads, *a, g.len())),
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in row.iter_mut() {
        *x = math::exp(*x - max);
        s += *x;
    }
    for x in row.iter_mut() {
        *x /= s;
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(row.iter().map(|x| math::exp(x - max)).sum::<f64>());
    for x in row.iter_mut() {
        *x -= lse;
    }
}

pub(crate) fn focal_value(logp: f64, gamma: f64) -> f64 {
    let w = math::powf(1.0 - math::exp(logp), gamma);
    -(w * logp)
}

fn focal_derivative(logp: f64, gamma: f64) -> f64 {
    let p = math::exp(logp);
    let q = 1.0 - p;
    if gamma == 0.0 {
        return -1.0;
    }
    // d/dl of -(1-e^l)^γ l = γ (1-p)^(γ-1) p l - (1-p)^γ ; first term is 0 when q = 0 (then l = 0)
    let first = if q > 0.0 {
        gamma * math::powf(q, gamma - 1.0) * p * logp
    } else {
        0.0
    };
    first - math::powf(q, gamma)
}
