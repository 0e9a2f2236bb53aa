//! KL-weight schedules: the weight multiplying the KL term of the VAE
//! objective as a function of the global training step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Weight fixed at 0: the objective is the reconstruction term alone.
    Zero,
    /// Weight fixed at 1 for the whole run.
    Constant,
    /// Weight grows linearly from 0 to 1 over the first `r_lin` fraction of
    /// the run and stays at 1 afterwards.
    Linear,
    /// The run is split into `cycles` equal cycles; within each cycle the
    /// weight anneals linearly from 0 to 1 over the first `r` fraction and
    /// then stays at 1 until the cycle ends.
    Cyclical,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScheduleKind::Zero => "zero",
            ScheduleKind::Constant => "constant",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cyclical => "cyclical",
        };
        write!(f, "{s}")
    }
}

/// A fully resolved schedule over `total_steps` optimizer updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// Total number of optimizer updates in the run (epochs x batches).
    pub total_steps: usize,
    /// Number of cycles (cyclical only).
    pub cycles: usize,
    /// Fraction of each cycle spent annealing, in (0, 1] (cyclical only).
    pub anneal_fraction: f64,
    /// Fraction of the run over which the linear schedule anneals, in (0, 1].
    pub linear_fraction: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, total_steps: usize) -> Result<Self> {
        Schedule::with_params(kind, total_steps, 4, 0.5, 1.0)
    }

    pub fn with_params(
        kind: ScheduleKind,
        total_steps: usize,
        cycles: usize,
        anneal_fraction: f64,
        linear_fraction: f64,
    ) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::Config("schedule: total_steps must be positive".into()));
        }
        if cycles == 0 {
            return Err(Error::Config("schedule: cycles must be positive".into()));
        }
        if !(0.0 < anneal_fraction && anneal_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "schedule: anneal fraction must be in (0, 1], got {anneal_fraction}"
            )));
        }
        if !(0.0 < linear_fraction && linear_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "schedule: linear fraction must be in (0, 1], got {linear_fraction}"
            )));
        }
        Ok(Schedule { kind, total_steps, cycles, anneal_fraction, linear_fraction })
    }

    /// Cycle length in steps (ceiling division, cyclical schedule).
    pub fn cycle_len(&self) -> usize {
        self.total_steps.div_ceil(self.cycles)
    }

    /// KL weight at training step `t` (0-based, `t < total_steps`).
    pub fn beta_at(&self, t: usize) -> Result<f64> {
        if t >= self.total_steps {
            return Err(Error::contract(format!(
                "schedule step {t} out of range (total {})",
                self.total_steps
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Zero => 0.0,
            ScheduleKind::Constant => 1.0,
            ScheduleKind::Linear => {
                let denom = self.linear_fraction * (self.total_steps - 1) as f64;
                if denom <= 0.0 {
                    1.0
                } else {
                    (t as f64 / denom).min(1.0)
                }
            }
            ScheduleKind::Cyclical => {
                let cycle_len = self.cycle_len();
                let offset = t % cycle_len;
                let window = self.anneal_fraction * cycle_len as f64;
                (offset as f64 / window).min(1.0)
            }
        })
    }

    /// The full (step, weight) trace for the run.
    pub fn beta_trace(&self) -> Vec<(usize, f64)> {
        (0..self.total_steps)
            .map(|t| (t, self.beta_at(t).expect("t < total_steps")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_constant_are_flat() {
        let z = Schedule::new(ScheduleKind::Zero, 100).unwrap();
        let c = Schedule::new(ScheduleKind::Constant, 100).unwrap();
        for t in 0..100 {
            assert_eq!(z.beta_at(t).unwrap(), 0.0);
            assert_eq!(c.beta_at(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn linear_endpoints() {
        let s = Schedule::new(ScheduleKind::Linear, 2).unwrap();
        assert_eq!(s.beta_at(0).unwrap(), 0.0);
        assert_eq!(s.beta_at(1).unwrap(), 1.0);
        let s = Schedule::new(ScheduleKind::Linear, 500).unwrap();
        assert_eq!(s.beta_at(0).unwrap(), 0.0);
        assert_eq!(s.beta_at(499).unwrap(), 1.0);
        // single-step run: the weight is already 1
        let s = Schedule::new(ScheduleKind::Linear, 1).unwrap();
        assert_eq!(s.beta_at(0).unwrap(), 1.0);
    }

    #[test]
    fn cyclical_reference_points() {
        // cycle length 250, anneal window 125
        let s = Schedule::with_params(ScheduleKind::Cyclical, 1000, 4, 0.5, 1.0).unwrap();
        assert_eq!(s.beta_at(0).unwrap(), 0.0);
        assert_eq!(s.beta_at(125).unwrap(), 1.0);
        assert_eq!(s.beta_at(130).unwrap(), 1.0);
        assert_eq!(s.beta_at(250).unwrap(), 0.0);
        assert_eq!(s.beta_at(62).unwrap(), 0.496);
    }

    #[test]
    fn cyclical_is_periodic() {
        let s = Schedule::with_params(ScheduleKind::Cyclical, 1000, 4, 0.5, 1.0).unwrap();
        let l = s.cycle_len();
        for t in 0..(1000 - l) {
            assert_eq!(s.beta_at(t).unwrap(), s.beta_at(t + l).unwrap());
        }
    }

    #[test]
    fn trace_properties() {
        let lin = Schedule::new(ScheduleKind::Linear, 2).unwrap();
        assert_eq!(lin.beta_trace(), vec![(0, 0.0), (1, 1.0)]);

        let c = Schedule::new(ScheduleKind::Constant, 37).unwrap();
        let total: f64 = c.beta_trace().iter().map(|(_, b)| b).sum();
        assert_eq!(total, 37.0);

        let cy = Schedule::with_params(ScheduleKind::Cyclical, 1000, 4, 0.5, 1.0).unwrap();
        let zeros = cy.beta_trace().iter().filter(|(_, b)| *b == 0.0).count();
        assert_eq!(zeros, 4);
    }

    #[test]
    fn out_of_range_step_is_rejected() {
        let s = Schedule::new(ScheduleKind::Zero, 10).unwrap();
        assert!(s.beta_at(10).is_err());
    }

    #[test]
    fn bounds_hold_for_all_kinds() {
        for kind in [ScheduleKind::Zero, ScheduleKind::Constant, ScheduleKind::Linear, ScheduleKind::Cyclical] {
            let s = Schedule::with_params(kind, 313, 4, 0.5, 0.7).unwrap();
            for t in 0..313 {
                let b = s.beta_at(t).unwrap();
                assert!((0.0..=1.0).contains(&b), "{kind:?} beta({t}) = {b}");
            }
        }
    }
}
