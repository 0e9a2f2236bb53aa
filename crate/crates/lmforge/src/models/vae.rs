//! Sentence variational autoencoder: LSTM encoder to a diagonal Gaussian
//! posterior, reparameterized latent, LSTM decoder conditioned on the latent
//! through its initial hidden state.

use crate::corpus::{EOS_ID, PAD_ID, SOS_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::models::lstm::{LstmParams, INIT_BOUND};
use crate::models::rnnlm::argmax;
use crate::models::softmax_probs;
use crate::seeding::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Param;

pub struct VaeModel {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub max_len: usize,
    /// Probability that a decoder input token is replaced by `<unk>` during
    /// training (word dropout).
    pub word_dropout: f64,
    pub embedding: Param,
    pub encoder: LstmParams,
    pub w_mu: Param,
    pub b_mu: Param,
    pub w_logvar: Param,
    pub b_logvar: Param,
    /// Latent-to-initial-hidden projection `[Z x H]`; the decoder starts at
    /// `h0 = tanh(z . w_z2h)`, `c0 = 0`.
    pub w_z2h: Param,
    pub decoder: LstmParams,
    pub w_out: Param,
    pub b_out: Param,
}

impl VaeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        vocab_size: usize,
        embedding_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        max_len: usize,
        word_dropout: f64,
        rng: &mut Rng,
    ) -> Self {
        VaeModel {
            vocab_size,
            embedding_dim,
            hidden_dim,
            latent_dim,
            max_len,
            word_dropout,
            embedding: Param::uniform("vae.embedding", vec![vocab_size, embedding_dim], INIT_BOUND, rng),
            encoder: LstmParams::init("vae.encoder", embedding_dim, hidden_dim, rng),
            w_mu: Param::uniform("vae.w_mu", vec![hidden_dim, latent_dim], INIT_BOUND, rng),
            b_mu: Param::zeros("vae.b_mu", vec![latent_dim]),
            w_logvar: Param::uniform("vae.w_logvar", vec![hidden_dim, latent_dim], INIT_BOUND, rng),
            b_logvar: Param::zeros("vae.b_logvar", vec![latent_dim]),
            w_z2h: Param::uniform("vae.w_z2h", vec![latent_dim, hidden_dim], INIT_BOUND, rng),
            decoder: LstmParams::init("vae.decoder", embedding_dim, hidden_dim, rng),
            w_out: Param::uniform("vae.w_out", vec![hidden_dim, vocab_size], INIT_BOUND, rng),
            b_out: Param::zeros("vae.b_out", vec![vocab_size]),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.embedding];
        p.extend(self.encoder.params());
        p.extend([&self.w_mu, &self.b_mu, &self.w_logvar, &self.b_logvar, &self.w_z2h]);
        p.extend(self.decoder.params());
        p.extend([&self.w_out, &self.b_out]);
        p
    }

    /// Runs the encoder over a same-length batch `[B x T]` (step-major id
    /// layout: position t of row b at `t * rows + b`) and projects the final
    /// hidden state to the posterior mean and log-variance, each `[B x Z]`.
    pub fn encode_batch(&self, tape: &mut Tape, ids: &[usize], rows: usize) -> Result<(Var, Var)> {
        if rows == 0 || ids.is_empty() || ids.len() % rows != 0 {
            return Err(Error::DegenerateInput("encoder needs a non-empty same-length batch".into()));
        }
        let steps = ids.len() / rows;
        let emb = tape.leaf(self.embedding.tensor());
        let mut h = tape.constant(vec![rows, self.hidden_dim], vec![0.0; rows * self.hidden_dim])?;
        let mut c = h;
        for t in 0..steps {
            let x = tape.gather_rows(emb, &ids[t * rows..(t + 1) * rows])?;
            let (h2, c2) = self.encoder.step(tape, x, h, c)?;
            h = h2;
            c = c2;
        }
        let w_mu = tape.leaf(self.w_mu.tensor());
        let b_mu = tape.leaf(self.b_mu.tensor());
        let mu_p = tape.matmul(h, w_mu)?;
        let mu = tape.add_row_bias(mu_p, b_mu)?;
        let w_lv = tape.leaf(self.w_logvar.tensor());
        let b_lv = tape.leaf(self.b_logvar.tensor());
        let lv_p = tape.matmul(h, w_lv)?;
        let logvar = tape.add_row_bias(lv_p, b_lv)?;
        Ok((mu, logvar))
    }

    /// Posterior parameters of one sentence.
    pub fn encode(&self, tape: &mut Tape, sentence: &[usize]) -> Result<(Var, Var)> {
        if sentence.is_empty() {
            return Err(Error::DegenerateInput("cannot encode an empty sentence".into()));
        }
        self.encode_batch(tape, sentence, 1)
    }

    /// Decoder reconstruction loss for a same-length batch: teacher-forced
    /// mean per-token NLL of targets (sentences plus `<eos>`), conditioning
    /// on `z` through the initial hidden state. `wd_mask` has one entry per
    /// decoder input position (step-major, `steps * rows` entries where
    /// steps = sentence length + 1); `true` replaces that input token with
    /// `<unk>` before embedding (word dropout).
    pub fn decode_nll_batch(
        &self,
        tape: &mut Tape,
        z: Var,
        sentences: &[usize],
        rows: usize,
        wd_mask: &[bool],
    ) -> Result<Var> {
        let (logits, targets, mask) = self.decode_logits(tape, z, sentences, rows, wd_mask)?;
        tape.softmax_cross_entropy(logits, &targets, &mask)
    }

    fn decode_logits(
        &self,
        tape: &mut Tape,
        z: Var,
        sentences: &[usize],
        rows: usize,
        wd_mask: &[bool],
    ) -> Result<(Var, Vec<usize>, Vec<bool>)> {
        if rows == 0 || sentences.is_empty() || sentences.len() % rows != 0 {
            return Err(Error::DegenerateInput("decoder needs a non-empty same-length batch".into()));
        }
        let len = sentences.len() / rows;
        let steps = len + 1;
        if wd_mask.len() != steps * rows {
            return Err(Error::contract(format!(
                "word-dropout mask must cover {} positions, got {}",
                steps * rows,
                wd_mask.len()
            )));
        }
        let w_z2h = tape.leaf(self.w_z2h.tensor());
        let zh = tape.matmul(z, w_z2h)?;
        let mut h = tape.tanh(zh)?;
        let mut c = tape.constant(vec![rows, self.hidden_dim], vec![0.0; rows * self.hidden_dim])?;

        let emb = tape.leaf(self.embedding.tensor());
        let mut states = Vec::with_capacity(steps);
        let mut targets = vec![PAD_ID; steps * rows];
        for t in 0..steps {
            let mut col = Vec::with_capacity(rows);
            for b in 0..rows {
                let idx = t * rows + b;
                let raw = if t == 0 { SOS_ID } else { sentences[(t - 1) * rows + b] };
                col.push(if wd_mask[idx] { UNK_ID } else { raw });
                targets[idx] = if t == len { EOS_ID } else { sentences[t * rows + b] };
            }
            let x = tape.gather_rows(emb, &col)?;
            let (h2, c2) = self.decoder.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            states.push(h);
        }
        let stacked = tape.concat_rows(&states)?;
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let proj = tape.matmul(stacked, w)?;
        let logits = tape.add_row_bias(proj, b)?;
        let mask = vec![true; steps * rows];
        Ok((logits, targets, mask))
    }

    /// Single-sentence reconstruction loss.
    pub fn decode_nll(&self, tape: &mut Tape, z: Var, target: &[usize], wd_mask: &[bool]) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::DegenerateInput("cannot decode an empty target".into()));
        }
        self.decode_nll_batch(tape, z, target, 1, wd_mask)
    }

    /// Full objective for one sentence: `(total, recon, kl)` with
    /// `total = recon + beta * kl`. `eps` is the caller-seeded standard
    /// normal draw for the reparameterization.
    pub fn loss(
        &self,
        tape: &mut Tape,
        sentence: &[usize],
        beta: f64,
        eps: &[f64],
        wd_mask: &[bool],
    ) -> Result<(Var, Var, Var)> {
        self.loss_batch(tape, sentence, 1, beta, eps, wd_mask)
    }

    /// Batched objective; recon is a per-token mean, kl a per-sentence mean.
    pub fn loss_batch(
        &self,
        tape: &mut Tape,
        sentences: &[usize],
        rows: usize,
        beta: f64,
        eps: &[f64],
        wd_mask: &[bool],
    ) -> Result<(Var, Var, Var)> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::contract(format!("beta must lie in [0, 1], got {beta}")));
        }
        let (mu, logvar) = self.encode_batch(tape, sentences, rows)?;
        let z = reparameterize(tape, mu, logvar, eps)?;
        let recon = self.decode_nll_batch(tape, z, sentences, rows, wd_mask)?;
        let kl = tape.kl_diag_gaussian(mu, logvar)?;
        let weighted = tape.scale(kl, beta)?;
        let total = tape.add(recon, weighted)?;
        Ok((total, recon, kl))
    }

    /// Greedy decoding at a fixed latent point.
    pub fn generate_greedy(&self, z: &[f64], max_len: usize) -> Result<Vec<usize>> {
        self.generate(z, max_len, 1.0, None)
    }

    /// Ancestral sampling at a fixed latent point.
    pub fn generate_ancestral(&self, z: &[f64], max_len: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<usize>> {
        self.generate(z, max_len, temperature, Some(rng))
    }

    fn generate(&self, z: &[f64], max_len: usize, temperature: f64, mut rng: Option<&mut Rng>) -> Result<Vec<usize>> {
        if z.len() != self.latent_dim {
            return Err(Error::contract(format!(
                "latent vector has {} dims, model expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let mut tape = Tape::new();
        let w_z2h = tape.leaf(self.w_z2h.tensor());
        let zv = tape.constant(vec![1, self.latent_dim], z.to_vec())?;
        let zh = tape.matmul(zv, w_z2h)?;
        let mut h = tape.tanh(zh)?;
        let mut c = tape.constant(vec![1, self.hidden_dim], vec![0.0; self.hidden_dim])?;

        let emb = tape.leaf(self.embedding.tensor());
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let mut cur = SOS_ID;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let x = tape.gather_rows(emb, &[cur])?;
            let (h2, c2) = self.decoder.step(&mut tape, x, h, c)?;
            h = h2;
            c = c2;
            let proj = tape.matmul(h, w)?;
            let logits_var = tape.add_row_bias(proj, b)?;
            let logits = tape.values(logits_var);
            let probs = softmax_probs(&logits, temperature);
            let id = match rng.as_deref_mut() {
                None => argmax(&probs),
                Some(r) => r.categorical(&probs),
            };
            if id == EOS_ID {
                break;
            }
            out.push(id);
            cur = id;
        }
        Ok(out)
    }

    /// Posterior mean of one sentence as plain values.
    pub fn posterior_mean(&self, sentence: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (mu, _) = self.encode(&mut tape, sentence)?;
        Ok(tape.values(mu))
    }
}

/// `z = mu + exp(0.5 * logvar) * eps`, differentiable w.r.t. `mu` and
/// `logvar`; `eps` comes from the caller's seeded sampler.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, eps: &[f64]) -> Result<Var> {
    let shape = tape.shape(mu).to_vec();
    let half = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half)?;
    let eps_var = tape.constant(shape, eps.to_vec())?;
    let noise = tape.mul(sigma, eps_var)?;
    tape.add(mu, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn tiny_vae(rng: &mut Rng) -> VaeModel {
        VaeModel::init(11, 4, 5, 3, 12, 0.5, rng)
    }

    fn zeroed_vae() -> VaeModel {
        let mut rng = Rng::from_seed(0);
        let m = tiny_vae(&mut rng);
        for p in m.params() {
            let n = p.values().len();
            p.set_values(vec![0.0; n]).unwrap();
        }
        m
    }

    #[test]
    fn zero_weights_give_prior_posterior() {
        let m = zeroed_vae();
        let mut tape = Tape::new();
        let (mu, lv) = m.encode(&mut tape, &[5, 6, 7]).unwrap();
        assert!(tape.values(mu).iter().all(|&v| v == 0.0));
        assert!(tape.values(lv).iter().all(|&v| v == 0.0));
        assert_eq!(tape.shape(mu), &[1, 3]);
    }

    #[test]
    fn encode_shape_is_independent_of_length() {
        let mut rng = Rng::from_seed(5);
        let m = tiny_vae(&mut rng);
        for len in [1, 4, 9] {
            let sent: Vec<usize> = (0..len).map(|i| 5 + (i % 3)).collect();
            let mut tape = Tape::new();
            let (mu, _) = m.encode(&mut tape, &sent).unwrap();
            assert_eq!(tape.shape(mu), &[1, 3]);
        }
    }

    #[test]
    fn reparameterize_identities() {
        let mut tape = Tape::new();
        let mu = tape.constant(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let lv = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        let z = reparameterize(&mut tape, mu, lv, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(tape.values(z), vec![0.5, -1.0, 2.0]);
        let z1 = reparameterize(&mut tape, mu, lv, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(tape.values(z1), vec![1.5, 0.0, 3.0]);
    }

    #[test]
    fn kl_closed_form_values() {
        let mut tape = Tape::new();
        let mu = tape.constant(vec![1, 1], vec![0.0]).unwrap();
        let lv = tape.constant(vec![1, 1], vec![0.0]).unwrap();
        let kl = tape.kl_diag_gaussian(mu, lv).unwrap();
        assert_eq!(tape.scalar_value(kl), 0.0);

        let mu = tape.constant(vec![1, 1], vec![1.0]).unwrap();
        let kl = tape.kl_diag_gaussian(mu, lv).unwrap();
        assert_eq!(tape.scalar_value(kl), 0.5);
    }

    #[test]
    fn word_dropout_all_true_ignores_input_identities() {
        // With every decoder input replaced by <unk>, the logits depend only
        // on z and the sentence length, not on which tokens were fed in.
        let mut rng = Rng::from_seed(9);
        let m = tiny_vae(&mut rng);
        let z = vec![0.3, -0.2, 0.1];
        let logits_for = |sentence: &[usize], wd: &[bool]| {
            let mut tape = Tape::new();
            let zv = tape.constant(vec![1, 3], z.clone()).unwrap();
            let (logits, _, _) = m.decode_logits(&mut tape, zv, sentence, 1, wd).unwrap();
            tape.values(logits)
        };
        let all_true = vec![true; 4];
        let a = logits_for(&[5, 6, 7], &all_true);
        let b = logits_for(&[8, 9, 10], &all_true);
        assert_eq!(a, b);

        // whereas without dropout the inputs matter
        let none = vec![false; 4];
        let a2 = logits_for(&[5, 6, 7], &none);
        let b2 = logits_for(&[8, 9, 10], &none);
        assert_ne!(a2, b2);
    }

    #[test]
    fn loss_identity_total_recon_kl() {
        let mut rng = Rng::from_seed(21);
        let m = tiny_vae(&mut rng);
        let eps = vec![0.1, -0.4, 0.9];
        let wd = vec![false, true, false, false];
        for beta in [0.0, 0.5, 1.0] {
            let mut tape = Tape::new();
            let (total, recon, kl) = m.loss(&mut tape, &[5, 6, 7], beta, &eps, &wd).unwrap();
            let (t, r, k) = (tape.scalar_value(total), tape.scalar_value(recon), tape.scalar_value(kl));
            assert!((t - (r + beta * k)).abs() < 1e-12);
            if beta == 0.0 {
                assert_eq!(t, r);
            }
            assert!(k >= 0.0);
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let mut rng = Rng::from_seed(33);
        let m = tiny_vae(&mut rng);
        let eps = vec![0.3, -0.7, 0.2];
        let wd = vec![false, false, true, false];
        let params = m.params();
        let report = check_gradients(
            &params,
            || {
                let mut tape = Tape::new();
                let (total, _, _) = m.loss(&mut tape, &[5, 6, 7], 0.5, &eps, &wd)?;
                Ok((tape, total))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "worst {} at {}[{}]", report.max_rel_err, report.worst_param, report.worst_index);
    }

    #[test]
    fn greedy_generation_is_a_pure_function_of_z() {
        let mut rng = Rng::from_seed(40);
        let m = tiny_vae(&mut rng);
        let z: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        assert_eq!(m.generate_greedy(&z, 8).unwrap(), m.generate_greedy(&z, 8).unwrap());
        assert!(m.generate_greedy(&z, 1).unwrap().len() <= 1);
    }
}
