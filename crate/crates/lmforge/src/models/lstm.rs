//! Standard (non-peephole) LSTM cell.

use crate::error::Result;
use crate::seeding::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Param;

pub const INIT_BOUND: f64 = 0.08;

/// Gate parameters for one LSTM layer. Input-to-gate weights are stored
/// `[input_dim x hidden_dim]`, hidden-to-gate `[hidden_dim x hidden_dim]`,
/// biases `[hidden_dim]`; activations are row-major `[batch x dim]`.
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_xi: Param,
    pub w_hi: Param,
    pub b_i: Param,
    pub w_xf: Param,
    pub w_hf: Param,
    pub b_f: Param,
    pub w_xg: Param,
    pub w_hg: Param,
    pub b_g: Param,
    pub w_xo: Param,
    pub w_ho: Param,
    pub b_o: Param,
}

impl LstmParams {
    /// Uniform(-0.08, 0.08) weights; forget-gate bias starts at 1.0, the
    /// other biases at 0.
    pub fn init(prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let w = |name: &str, r: usize, c: usize, rng: &mut Rng| {
            Param::uniform(format!("{prefix}.{name}"), vec![r, c], INIT_BOUND, rng)
        };
        LstmParams {
            input_dim,
            hidden_dim,
            w_xi: w("w_xi", input_dim, hidden_dim, rng),
            w_hi: w("w_hi", hidden_dim, hidden_dim, rng),
            b_i: Param::zeros(format!("{prefix}.b_i"), vec![hidden_dim]),
            w_xf: w("w_xf", input_dim, hidden_dim, rng),
            w_hf: w("w_hf", hidden_dim, hidden_dim, rng),
            b_f: Param::constant(format!("{prefix}.b_f"), vec![hidden_dim], 1.0),
            w_xg: w("w_xg", input_dim, hidden_dim, rng),
            w_hg: w("w_hg", hidden_dim, hidden_dim, rng),
            b_g: Param::zeros(format!("{prefix}.b_g"), vec![hidden_dim]),
            w_xo: w("w_xo", input_dim, hidden_dim, rng),
            w_ho: w("w_ho", hidden_dim, hidden_dim, rng),
            b_o: Param::zeros(format!("{prefix}.b_o"), vec![hidden_dim]),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.w_xi, &self.w_hi, &self.b_i, &self.w_xf, &self.w_hf, &self.b_f,
            &self.w_xg, &self.w_hg, &self.b_g, &self.w_xo, &self.w_ho, &self.b_o,
        ]
    }

    /// One step: `i,f,o = sigmoid(..)`, `g = tanh(..)`,
    /// `c' = f*c + i*g`, `h' = o*tanh(c')`. `x` is `[batch x input_dim]`,
    /// `h`/`c` are `[batch x hidden_dim]`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let gate = |tape: &mut Tape, wx: &Param, wh: &Param, b: &Param| -> Result<Var> {
            let lx = tape.leaf(wx.tensor());
            let lh = tape.leaf(wh.tensor());
            let lb = tape.leaf(b.tensor());
            let xa = tape.matmul(x, lx)?;
            let ha = tape.matmul(h, lh)?;
            let s = tape.add(xa, ha)?;
            tape.add_row_bias(s, lb)
        };
        let zi = gate(tape, &self.w_xi, &self.w_hi, &self.b_i)?;
        let i = tape.sigmoid(zi)?;
        let zf = gate(tape, &self.w_xf, &self.w_hf, &self.b_f)?;
        let f = tape.sigmoid(zf)?;
        let zg = gate(tape, &self.w_xg, &self.w_hg, &self.b_g)?;
        let g = tape.tanh(zg)?;
        let zo = gate(tape, &self.w_xo, &self.w_ho, &self.b_o)?;
        let o = tape.sigmoid(zo)?;

        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn zero_lstm(e: usize, h: usize) -> LstmParams {
        let mut rng = Rng::from_seed(0);
        let p = LstmParams::init("lstm", e, h, &mut rng);
        for param in p.params() {
            let n = param.values().len();
            param.set_values(vec![0.0; n]).unwrap();
        }
        p
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let p = zero_lstm(3, 4);
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        let h = tape.constant(vec![1, 4], vec![0.0; 4]).unwrap();
        let c = tape.constant(vec![1, 4], vec![0.0; 4]).unwrap();
        let (h2, c2) = p.step(&mut tape, x, h, c).unwrap();
        assert!(tape.values(h2).iter().all(|&v| v == 0.0));
        assert!(tape.values(c2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell_state() {
        // With forget bias 50 the forget gate is 1 up to f64 rounding, so
        // c' = c + i*g. Running the same step with c = 0 isolates i*g.
        let mut rng = Rng::from_seed(1);
        let p = LstmParams::init("lstm", 3, 4, &mut rng);
        p.b_f.set_values(vec![50.0; 4]).unwrap();

        let xv: Vec<f64> = (0..3).map(|i| 0.1 * i as f64).collect();
        let hv: Vec<f64> = (0..4).map(|i| 0.05 * i as f64).collect();
        let cv: Vec<f64> = (0..4).map(|i| 0.2 - 0.1 * i as f64).collect();

        let run = |cell: Vec<f64>| -> Vec<f64> {
            let mut tape = Tape::new();
            let x = tape.constant(vec![1, 3], xv.clone()).unwrap();
            let h = tape.constant(vec![1, 4], hv.clone()).unwrap();
            let c = tape.constant(vec![1, 4], cell).unwrap();
            let (_, c2) = p.step(&mut tape, x, h, c).unwrap();
            tape.values(c2)
        };
        let with_c = run(cv.clone());
        let ig = run(vec![0.0; 4]);
        for j in 0..4 {
            assert!((with_c[j] - (cv[j] + ig[j])).abs() < 1e-9, "lane {j}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::from_seed(7);
        let p = LstmParams::init("lstm", 3, 4, &mut rng);
        let xv: Vec<f64> = (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let hv: Vec<f64> = (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let cv: Vec<f64> = (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect();

        let params = p.params();
        let report = check_gradients(
            &params,
            || {
                let mut tape = Tape::new();
                let x = tape.constant(vec![2, 3], xv.clone())?;
                let h = tape.constant(vec![2, 4], hv.clone())?;
                let c = tape.constant(vec![2, 4], cv.clone())?;
                let (h2, c2) = p.step(&mut tape, x, h, c)?;
                let hc = tape.concat_rows(&[h2, c2])?;
                let sq = tape.mul(hc, hc)?;
                let loss = tape.sum(sq)?;
                Ok((tape, loss))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "max rel err {}", report.max_rel_err);
    }
}
