//! Cross-entropy, focal loss and the sequence form of focal loss used by the
//! generating edge head. All functions build on a [`Tape`] so they are
//! differentiable in the logits.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// `-log softmax(logits)[target]` for one logit vector.
pub fn cross_entropy(t: &mut Tape, logits: Var, target: usize) -> Result<Var> {
    let lp = t.log_softmax(logits);
    let p = t.pick(lp, alloc::vec![target])?;
    let l = t.neg(p);
    t.reshape(l, Vec::new())
}

/// `-(1 - p_t)^gamma · log p_t` with `p_t = softmax(logits)[target]`.
pub fn focal_loss(t: &mut Tape, logits: Var, target: usize, gamma: f64) -> Result<Var> {
    check_gamma(gamma)?;
    let lp = t.log_softmax(logits);
    let p = t.pick(lp, alloc::vec![target])?;
    let l = t.focal(p, gamma);
    t.reshape(l, Vec::new())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("focal gamma must be >= 0, got {gamma}")))
    }
}

fn flat_picks(t: &Tape, logits: Var, targets: &[usize]) -> Result<Vec<usize>> {
    let shape = t.shape(logits);
    let (rows, v) = match shape {
        [r, v] => (*r, *v),
        _ => return Err(Error::shape("token_losses", format!("expected [rows, V], got {shape:?}"))),
    };
    if targets.len() != rows {
        return Err(Error::shape("token_losses", format!("{rows} rows, {} targets", targets.len())));
    }
    if let Some(bad) = targets.iter().find(|&&x| x >= v) {
        return Err(Error::shape("token_losses", format!("target {bad} out of {v} classes")));
    }
    Ok(targets.iter().enumerate().map(|(r, &c)| r * v + c).collect())
}

/// Per-row focal losses (`[rows]`) of `logits: [rows, V]`; `gamma = 0` gives
/// plain cross-entropy.
pub fn token_losses(t: &mut Tape, logits: Var, targets: &[usize], gamma: f64) -> Result<Var> {
    check_gamma(gamma)?;
    let picks = flat_picks(t, logits, targets)?;
    let lp = t.log_softmax(logits);
    let p = t.pick(lp, picks)?;
    Ok(if gamma == 0.0 { t.neg(p) } else { t.focal(p, gamma) })
}

/// Mean of [`token_losses`].
pub fn mean_token_loss(t: &mut Tape, logits: Var, targets: &[usize], gamma: f64) -> Result<Var> {
    let l = token_losses(t, logits, targets, gamma)?;
    t.mean(l)
}

/// Focal loss on a whole token sequence. The sequence probability is the
/// geometric mean of the per-token target probabilities,
/// `p_t = exp(mean_s log p(y_s))`, so that `gamma = 0` is the mean token
/// cross-entropy.
///
/// `logits` is `[L, V]` with `L >= targets.len()`; only the first
/// `targets.len()` positions (through the end token) are scored.
pub fn sequence_focal(t: &mut Tape, logits: Var, targets: &[usize], gamma: f64) -> Result<Var> {
    let rows = t.shape(logits).first().copied().unwrap_or(0);
    if targets.is_empty() || targets.len() > rows {
        return Err(Error::shape("sequence_focal", format!("{} targets for {rows} positions", targets.len())));
    }
    let l = sequence_focal_batch(t, logits, 1, &[targets.to_vec()], gamma)?;
    t.reshape(l, Vec::new())
}

/// Batched [`sequence_focal`]: `logits` holds `steps` blocks of `batch` rows
/// (`[steps · batch, V]`, step-major), `targets[b]` the tokens of sequence
/// `b` (length ≤ `steps`). Returns `[batch]` losses.
pub fn sequence_focal_batch(t: &mut Tape, logits: Var, batch: usize, targets: &[Vec<usize>], gamma: f64) -> Result<Var> {
    check_gamma(gamma)?;
    let shape = t.shape(logits).to_vec();
    let (rows, v) = match shape.as_slice() {
        [r, v] => (*r, *v),
        _ => return Err(Error::shape("sequence_focal", format!("expected [rows, V], got {shape:?}"))),
    };
    if targets.len() != batch || batch == 0 || rows % batch != 0 {
        return Err(Error::shape("sequence_focal", format!("{rows} rows for {} sequences", targets.len())));
    }
    let steps = rows / batch;
    let mut picks = Vec::new();
    let mut seg = Vec::new();
    for (b, seq) in targets.iter().enumerate() {
        if seq.is_empty() || seq.len() > steps {
            return Err(Error::shape("sequence_focal", format!("sequence of {} tokens for {steps} steps", seq.len())));
        }
        for (s, &tok) in seq.iter().enumerate() {
            if tok >= v {
                return Err(Error::shape("sequence_focal", format!("target {tok} out of {v} classes")));
            }
            picks.push((s * batch + b) * v + tok);
            seg.push(b);
        }
    }
    let lp = t.log_softmax(logits);
    let p = t.pick(lp, picks)?;
    let m = t.segment_mean(p, seg, batch)?;
    Ok(if gamma == 0.0 { t.neg(m) } else { t.focal(m, gamma) })
}

/// Loss values of one example or batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub node_loss: f64,
    pub edge_loss: f64,
    pub total: f64,
    /// Edge-loss terms on real edges.
    pub real_edge_terms: usize,
    /// Edge-loss terms on no-edge cells.
    pub no_edge_terms: usize,
}

impl LossBreakdown {
    pub fn new(node_loss: f64, edge_loss: f64, real_edge_terms: usize, no_edge_terms: usize) -> Self {
        LossBreakdown {
            node_loss,
            edge_loss,
            total: node_loss + edge_loss,
            real_edge_terms,
            no_edge_terms,
        }
    }

    pub fn edge_terms(&self) -> usize {
        self.real_edge_terms + self.no_edge_terms
    }

    pub fn is_finite(&self) -> bool {
        self.node_loss.is_finite() && self.edge_loss.is_finite() && self.total.is_finite()
    }

    /// Running mean helper: adds `other` with weight `w`.
    pub fn accumulate(&mut self, other: &LossBreakdown, w: f64) {
        self.node_loss += w * other.node_loss;
        self.edge_loss += w * other.edge_loss;
        self.total = self.node_loss + self.edge_loss;
        self.real_edge_terms += other.real_edge_terms;
        self.no_edge_terms += other.no_edge_terms;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn logits(t: &mut Tape, v: &[f64]) -> Var {
        t.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let mut t = Tape::new();
        let x = logits(&mut t, &[0.3; 7]);
        let l = cross_entropy(&mut t, x, 2).unwrap();
        assert!((t.scalar(l) - math::ln(7.0)).abs() < 1e-14);
    }

    #[test]
    fn focal_reference_value() {
        // p_t = 0.9 for logits [ln 0.9, ln 0.1]
        let mut t = Tape::new();
        let x = logits(&mut t, &[math::ln(0.9), math::ln(0.1)]);
        let l = focal_loss(&mut t, x, 0, 2.0).unwrap();
        let expected = 0.01 * -math::ln(0.9);
        assert!((t.scalar(l) - expected).abs() < 1e-15);
        assert!((t.scalar(l) - 1.0536e-3).abs() < 1e-7);
    }

    #[test]
    fn negative_gamma_rejected() {
        let mut t = Tape::new();
        let x = logits(&mut t, &[0.0, 1.0]);
        assert!(focal_loss(&mut t, x, 0, -1.0).is_err());
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let mut t = Tape::new();
        let x = logits(&mut t, &[800.0, 0.0, 0.0]);
        for g in [0.0, 0.5, 2.0] {
            let l = focal_loss(&mut t, x, 0, g).unwrap();
            assert_eq!(t.scalar(l), 0.0);
        }
    }

    #[test]
    fn single_token_sequence_equals_focal() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 3], vec![0.2, -1.0, 0.7]).unwrap());
        let s = sequence_focal(&mut t, x, &[1], 2.0).unwrap();
        let x1 = t.reshape(x, vec![3]).unwrap();
        let f = focal_loss(&mut t, x1, 1, 2.0).unwrap();
        assert!((t.scalar(s) - t.scalar(f)).abs() < 1e-15);
    }

    #[test]
    fn breakdown_total_is_sum() {
        let b = LossBreakdown::new(0.25, 0.5, 2, 3);
        assert_eq!(b.total, 0.75);
        assert_eq!(b.edge_terms(), 5);
    }
}
