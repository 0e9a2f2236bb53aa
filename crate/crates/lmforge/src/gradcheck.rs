//! Central finite-difference verification of tape gradients.
//!
//! The builder closure must be deterministic in the parameter values: any
//! randomness (noise vectors, dropout masks) has to be fixed before calling.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Param;

pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
}

/// Relative error with a floor that keeps noise-level gradients from
/// dominating: |a - n| / max(|a|, |n|, 1e-3).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares tape gradients against central differences for every component
/// of every parameter. `build` runs the forward pass and returns the tape
/// plus the scalar loss node.
pub fn check_gradients<F>(params: &[&Param], mut build: F, h: f64) -> Result<GradCheck>
where
    F: FnMut() -> Result<(Tape, Var)>,
{
    for p in params {
        p.clear_grad();
    }
    let (mut tape, loss) = build()?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.values().len()]))
        .collect();
    drop(tape);

    let mut report = GradCheck { max_rel_err: 0.0, worst_param: String::new(), worst_index: 0 };
    for (pi, p) in params.iter().enumerate() {
        let base = p.values();
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += h;
            p.set_values(plus)?;
            let (tp, lp) = build()?;
            let f_plus = tp.scalar_value(lp);
            drop(tp);

            let mut minus = base.clone();
            minus[j] -= h;
            p.set_values(minus)?;
            let (tm, lm) = build()?;
            let f_minus = tm.scalar_value(lm);
            drop(tm);

            p.set_values(base.clone())?;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let err = relative_error(analytic[pi][j], numeric);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = p.name().to_string();
                report.worst_index = j;
            }
        }
    }
    for p in params {
        p.clear_grad();
    }
    Ok(report)
}
