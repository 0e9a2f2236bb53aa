//! CNN-highway sequence discriminator: embedding, parallel convolutions over
//! token windows, max-over-time pooling, one highway layer, sigmoid output.

use crate::corpus::PAD_ID;
use crate::error::Result;
use crate::models::lstm::INIT_BOUND;
use crate::seeding::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Param;

pub struct Discriminator {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub embedding: Param,
    /// Per width: kernels `[(width * embedding_dim) x filters]` and bias.
    pub conv_kernels: Vec<Param>,
    pub conv_bias: Vec<Param>,
    pub w_transform: Param,
    pub b_transform: Param,
    pub w_highway: Param,
    pub b_highway: Param,
    pub w_final: Param,
    pub b_final: Param,
}

impl Discriminator {
    pub fn init(vocab_size: usize, embedding_dim: usize, filter_widths: &[usize], filters_per_width: usize, rng: &mut Rng) -> Self {
        let pooled = filter_widths.len() * filters_per_width;
        let mut conv_kernels = Vec::new();
        let mut conv_bias = Vec::new();
        for &w in filter_widths {
            conv_kernels.push(Param::uniform(
                format!("disc.conv{w}.kernels"),
                vec![w * embedding_dim, filters_per_width],
                INIT_BOUND,
                rng,
            ));
            conv_bias.push(Param::zeros(format!("disc.conv{w}.bias"), vec![filters_per_width]));
        }
        Discriminator {
            vocab_size,
            embedding_dim,
            filter_widths: filter_widths.to_vec(),
            filters_per_width,
            embedding: Param::uniform("disc.embedding", vec![vocab_size, embedding_dim], INIT_BOUND, rng),
            conv_kernels,
            conv_bias,
            w_transform: Param::uniform("disc.w_transform", vec![pooled, pooled], INIT_BOUND, rng),
            b_transform: Param::zeros("disc.b_transform", vec![pooled]),
            w_highway: Param::uniform("disc.w_highway", vec![pooled, pooled], INIT_BOUND, rng),
            b_highway: Param::zeros("disc.b_highway", vec![pooled]),
            w_final: Param::uniform("disc.w_final", vec![pooled, 1], INIT_BOUND, rng),
            b_final: Param::zeros("disc.b_final", vec![1]),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.embedding];
        for k in &self.conv_kernels {
            p.push(k);
        }
        for b in &self.conv_bias {
            p.push(b);
        }
        p.extend([
            &self.w_transform, &self.b_transform, &self.w_highway, &self.b_highway,
            &self.w_final, &self.b_final,
        ]);
        p
    }

    fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    /// Pre-sigmoid score of a token sequence. Sequences shorter than the
    /// widest filter are padded with `<pad>`.
    pub fn score_logit(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        let mut padded = ids.to_vec();
        while padded.len() < self.max_width() {
            padded.push(PAD_ID);
        }
        let emb = tape.leaf(self.embedding.tensor());
        let x = tape.gather_rows(emb, &padded)?;

        let mut pooled = Vec::with_capacity(self.filter_widths.len());
        for (i, &w) in self.filter_widths.iter().enumerate() {
            let windows = tape.window_rows(x, w)?;
            let k = tape.leaf(self.conv_kernels[i].tensor());
            let b = tape.leaf(self.conv_bias[i].tensor());
            let conv = tape.matmul(windows, k)?;
            let conv = tape.add_row_bias(conv, b)?;
            let act = tape.tanh(conv)?;
            pooled.push(tape.max_over_rows(act)?);
        }
        let stacked = tape.concat_rows(&pooled)?;
        let d = self.filter_widths.len() * self.filters_per_width;
        let features = tape.reshape(stacked, vec![1, d])?;

        // highway: y = t * g + (1 - t) * x
        let wt = tape.leaf(self.w_transform.tensor());
        let bt = tape.leaf(self.b_transform.tensor());
        let t_pre = tape.matmul(features, wt)?;
        let t_pre = tape.add_row_bias(t_pre, bt)?;
        let t = tape.sigmoid(t_pre)?;

        let wh = tape.leaf(self.w_highway.tensor());
        let bh = tape.leaf(self.b_highway.tensor());
        let g_pre = tape.matmul(features, wh)?;
        let g_pre = tape.add_row_bias(g_pre, bh)?;
        let g = tape.tanh(g_pre)?;

        let tg = tape.mul(t, g)?;
        let neg_t = tape.neg(t)?;
        let one_minus_t = tape.add_scalar(neg_t, 1.0)?;
        let carry = tape.mul(one_minus_t, features)?;
        let y = tape.add(tg, carry)?;

        let wf = tape.leaf(self.w_final.tensor());
        let bf = tape.leaf(self.b_final.tensor());
        let out = tape.matmul(y, wf)?;
        tape.add_row_bias(out, bf)
    }

    /// Probability the sequence is real, in (0, 1).
    pub fn score(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        let logit = self.score_logit(tape, ids)?;
        tape.sigmoid(logit)
    }

    /// Plain score as a value.
    pub fn score_value(&self, ids: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let s = self.score(&mut tape, ids)?;
        Ok(tape.scalar_value(s))
    }

    /// Stable binary cross-entropy from the logit:
    /// `bce = label ? softplus(-logit) : softplus(logit)`.
    pub fn bce_loss(&self, tape: &mut Tape, ids: &[usize], real: bool) -> Result<Var> {
        let logit = self.score_logit(tape, ids)?;
        if real {
            let n = tape.neg(logit)?;
            tape.softplus(n)
        } else {
            tape.softplus(logit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn tiny_disc(rng: &mut Rng) -> Discriminator {
        Discriminator::init(11, 4, &[1, 2, 3], 3, rng)
    }

    #[test]
    fn zero_final_layer_scores_half() {
        let mut rng = Rng::from_seed(1);
        let d = tiny_disc(&mut rng);
        d.w_final.set_values(vec![0.0; 9]).unwrap();
        d.b_final.set_values(vec![0.0]).unwrap();
        assert_eq!(d.score_value(&[5, 6, 7, 8]).unwrap(), 0.5);
    }

    #[test]
    fn short_sequences_are_padded() {
        let mut rng = Rng::from_seed(2);
        let d = tiny_disc(&mut rng);
        let s = d.score_value(&[5]).unwrap();
        assert!(s > 0.0 && s < 1.0);
        let s = d.score_value(&[]).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn forced_transform_gate_reduces_to_plain_transform() {
        // b_transform = +50 saturates the gate at 1, so the highway output
        // must equal the transform branch alone.
        let mut rng = Rng::from_seed(3);
        let d = tiny_disc(&mut rng);
        d.b_transform.set_values(vec![50.0; 9]).unwrap();

        let ids = [5, 6, 7, 8, 9];
        let mut tape = Tape::new();
        let logit = d.score_logit(&mut tape, &ids).unwrap();
        let with_gate = tape.scalar_value(logit);

        // manual: features -> tanh(W_h x + b_h) -> final affine
        let mut tape = Tape::new();
        let emb = tape.leaf(d.embedding.tensor());
        let x = tape.gather_rows(emb, &ids).unwrap();
        let mut pooled = Vec::new();
        for (i, &w) in d.filter_widths.iter().enumerate() {
            let windows = tape.window_rows(x, w).unwrap();
            let k = tape.leaf(d.conv_kernels[i].tensor());
            let b = tape.leaf(d.conv_bias[i].tensor());
            let conv = tape.matmul(windows, k).unwrap();
            let conv = tape.add_row_bias(conv, b).unwrap();
            let act = tape.tanh(conv).unwrap();
            pooled.push(tape.max_over_rows(act).unwrap());
        }
        let stacked = tape.concat_rows(&pooled).unwrap();
        let features = tape.reshape(stacked, vec![1, 9]).unwrap();
        let wh = tape.leaf(d.w_highway.tensor());
        let bh = tape.leaf(d.b_highway.tensor());
        let g_pre = tape.matmul(features, wh).unwrap();
        let g_pre = tape.add_row_bias(g_pre, bh).unwrap();
        let g = tape.tanh(g_pre).unwrap();
        let wf = tape.leaf(d.w_final.tensor());
        let bf = tape.leaf(d.b_final.tensor());
        let out = tape.matmul(g, wf).unwrap();
        let out = tape.add_row_bias(out, bf).unwrap();
        let plain = tape.scalar_value(out);

        assert!((with_gate - plain).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::from_seed(4);
        let d = tiny_disc(&mut rng);
        let ids = vec![5usize, 6, 7, 8, 9, 10];
        let params = d.params();
        let report = check_gradients(
            &params,
            || {
                let mut tape = Tape::new();
                let loss = d.bce_loss(&mut tape, &ids, true)?;
                Ok((tape, loss))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "worst {} at {}", report.max_rel_err, report.worst_param);
    }
}
