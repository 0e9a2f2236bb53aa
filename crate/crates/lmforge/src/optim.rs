//! Parameter updates: plain SGD and bias-corrected Adam.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer state. Adam moments are keyed by parameter name, so the set of
/// parameters handed to `step` must be stable over a training run.
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer { kind: OptimizerKind::Adam, ..Optimizer::sgd(learning_rate) }
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::sgd(learning_rate),
            OptimizerKind::Adam => Optimizer::adam(learning_rate),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter and clears their gradients.
    /// Every parameter must hold a gradient (i.e. backward ran since the
    /// last step).
    pub fn step(&mut self, params: &[&Param]) -> Result<()> {
        for p in params {
            if p.tensor().borrow().grad.is_none() {
                return Err(Error::contract(format!(
                    "optimizer step: parameter {} has no gradient",
                    p.name()
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        for p in params {
            let mut tensor = p.tensor().borrow_mut();
            let grad = tensor.grad.take().expect("checked above");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in tensor.values.iter_mut().zip(&grad) {
                        *w -= self.learning_rate * g;
                    }
                }
                OptimizerKind::Adam => {
                    let n = grad.len();
                    let (m, v) = self
                        .moments
                        .entry(p.name().to_string())
                        .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
                    let bc1 = 1.0 - self.beta1.powi(t as i32);
                    let bc2 = 1.0 - self.beta2.powi(t as i32);
                    for j in 0..n {
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * grad[j];
                        v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * grad[j] * grad[j];
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        tensor.values[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(params: &[&Param], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in params {
        if let Some(g) = &p.tensor().borrow().grad {
            sq += g.iter().map(|x| x * x).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for p in params {
            if let Some(g) = &mut p.tensor().borrow_mut().grad {
                for x in g.iter_mut() {
                    *x *= factor;
                }
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn sgd_basic_update() {
        let p = Param::new("p", vec![1], vec![1.0]).unwrap();
        p.tensor().borrow_mut().grad = Some(vec![2.0]);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&[&p]).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
        assert!(p.grad().is_none());
    }

    #[test]
    fn missing_grad_is_a_contract_error() {
        let p = Param::new("p", vec![1], vec![1.0]).unwrap();
        let mut opt = Optimizer::sgd(0.1);
        assert!(opt.step(&[&p]).is_err());
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // With bias correction the first step is lr * g / (|g| + eps) ~= lr * sign(g).
        let p = Param::new("p", vec![2], vec![1.0, 1.0]).unwrap();
        p.tensor().borrow_mut().grad = Some(vec![0.5, -3.0]);
        let mut opt = Optimizer::adam(1e-3);
        opt.step(&[&p]).unwrap();
        assert!((p.values()[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p.values()[1] - (1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // f(p) = (p - 3)^2, f'(p) = 2 (p - 3); from p = 0 with lr = 0.1 the
        // error contracts by 0.8 per step: |p_k - 3| = 3 * 0.8^k.
        let p = Param::new("p", vec![1], vec![0.0]).unwrap();
        let mut opt = Optimizer::sgd(0.1);
        for _ in 0..50 {
            let mut tape = Tape::new();
            let x = tape.leaf(p.tensor());
            let shifted = tape.add_scalar(x, -3.0).unwrap();
            let sq = tape.mul(shifted, shifted).unwrap();
            let loss = tape.sum(sq).unwrap();
            tape.backward(loss).unwrap();
            opt.step(&[&p]).unwrap();
        }
        let expect = 3.0 * (1.0 - 3.0 * 0.8f64.powi(50) / 3.0); // 3 - 3*0.8^50
        assert!((p.values()[0] - 3.0).abs() < 1e-3);
        assert!((p.values()[0] - expect).abs() < 1e-4);
    }

    #[test]
    fn clip_rescales_long_gradients() {
        let p = Param::new("p", vec![2], vec![0.0, 0.0]).unwrap();
        p.tensor().borrow_mut().grad = Some(vec![3.0, 4.0]);
        let norm = clip_global_norm(&[&p], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = p.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] - 0.8).abs() < 1e-12);
    }
}
