//! Central-difference gradient checking.

use alloc::vec::Vec;

use super::{ParamGrads, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub eps: f64,
    pub rtol: f64,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-6,
            rtol: 1e-5,
            floor: 1e-4,
        }
    }
}

impl GradCheck {
    pub fn rel_err(&self, analytic: f64, numeric: f64) -> f64 {
        let denom = analytic.abs().max(numeric.abs()).max(self.floor);
        (analytic - numeric).abs() / denom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the largest error.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub rtol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.rtol
    }

    fn new(rtol: f64) -> Self {
        GradCheckReport {
            max_rel_err: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
            rtol,
        }
    }

    fn record(&mut self, cfg: &GradCheck, at: (usize, usize), analytic: f64, numeric: f64) {
        let e = cfg.rel_err(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_err || e.is_nan() {
            self.max_rel_err = if e.is_nan() { f64::INFINITY } else { e };
            self.worst = at;
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }
}

/// Checks `f(inputs)` against central differences on every input coordinate.
pub fn grad_check<F>(f: F, inputs: &[Tensor], cfg: GradCheck) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let out = f(&mut t, &vars)?;
        Ok(t.scalar(out))
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
    let out = f(&mut t, &vars)?;
    let grads = t.gradients(out)?;
    let mut report = GradCheckReport::new(cfg.rtol);
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = grads.get(*v).map_or_else(|| alloc::vec![0.0; inputs[i].len()], <[f64]>::to_vec);
        for k in 0..inputs[i].len() {
            let x0 = inputs[i].data()[k];
            work[i].data_mut()[k] = x0 + cfg.eps;
            let up = eval(&work)?;
            work[i].data_mut()[k] = x0 - cfg.eps;
            let down = eval(&work)?;
            work[i].data_mut()[k] = x0;
            report.record(&cfg, (i, k), analytic[k], (up - down) / (2.0 * cfg.eps));
        }
    }
    Ok(report)
}

/// Checks a parameterised loss on the listed `(parameter, coordinate)` pairs.
/// The store is perturbed in place and restored afterwards.
pub fn grad_check_params<F>(store: &mut ParamStore, coords: &[(ParamId, usize)], f: F, cfg: GradCheck) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut grads = ParamGrads::zeros_like(store);
    {
        let mut t = Tape::with_params(store);
        let out = f(&mut t)?;
        t.backward(out, &mut grads)?;
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::with_params(s);
        let out = f(&mut t)?;
        Ok(t.scalar(out))
    };
    let mut report = GradCheckReport::new(cfg.rtol);
    for &(id, k) in coords {
        let x0 = store.get(id).data()[k];
        store.get_mut(id).data_mut()[k] = x0 + cfg.eps;
        let up = eval(store);
        store.get_mut(id).data_mut()[k] = x0 - cfg.eps;
        let down = eval(store);
        store.get_mut(id).data_mut()[k] = x0;
        report.record(&cfg, (id.0, k), grads.get(id)[k], (up? - down?) / (2.0 * cfg.eps));
    }
    Ok(report)
}
