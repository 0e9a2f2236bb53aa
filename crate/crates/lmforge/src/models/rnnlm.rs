//! LSTM language model / seqGAN generator policy.

use crate::corpus::{EOS_ID, PAD_ID, SOS_ID};
use crate::error::{Error, Result};
use crate::models::lstm::{LstmParams, INIT_BOUND};
use crate::models::softmax_probs;
use crate::seeding::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Param;

pub struct GeneratorPolicy {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    pub embedding: Param,
    pub lstm: LstmParams,
    pub w_out: Param,
    pub b_out: Param,
}

/// A same-length batch of sentences prepared for teacher forcing: inputs are
/// `<sos>`-prefixed, targets are `<eos>`-suffixed, pads are masked out.
/// Layout is step-major: position t of row b lives at `t * rows + b`.
pub struct TeacherBatch {
    pub rows: usize,
    pub steps: usize,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TeacherBatch {
    /// Builds a batch, padding shorter sentences to the longest with
    /// `<pad>` and masking those positions. Empty batches or all-empty
    /// sentences are degenerate.
    pub fn new(sentences: &[&[usize]]) -> Result<TeacherBatch> {
        if sentences.is_empty() || sentences.iter().any(|s| s.is_empty()) {
            return Err(Error::DegenerateInput("teacher batch needs non-empty sentences".into()));
        }
        let rows = sentences.len();
        let steps = sentences.iter().map(|s| s.len()).max().unwrap() + 1;
        let mut inputs = vec![PAD_ID; rows * steps];
        let mut targets = vec![PAD_ID; rows * steps];
        let mut mask = vec![false; rows * steps];
        for (b, sent) in sentences.iter().enumerate() {
            for t in 0..=sent.len() {
                let idx = t * rows + b;
                inputs[idx] = if t == 0 { SOS_ID } else { sent[t - 1] };
                targets[idx] = if t == sent.len() { EOS_ID } else { sent[t] };
                mask[idx] = true;
            }
        }
        Ok(TeacherBatch { rows, steps, inputs, targets, mask })
    }

    pub fn token_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn input_column(&self, t: usize) -> &[usize] {
        &self.inputs[t * self.rows..(t + 1) * self.rows]
    }
}

impl GeneratorPolicy {
    pub fn init(vocab_size: usize, embedding_dim: usize, hidden_dim: usize, max_len: usize, rng: &mut Rng) -> Self {
        GeneratorPolicy {
            vocab_size,
            embedding_dim,
            hidden_dim,
            max_len,
            embedding: Param::uniform("gen.embedding", vec![vocab_size, embedding_dim], INIT_BOUND, rng),
            lstm: LstmParams::init("gen.lstm", embedding_dim, hidden_dim, rng),
            w_out: Param::uniform("gen.w_out", vec![hidden_dim, vocab_size], INIT_BOUND, rng),
            b_out: Param::zeros("gen.b_out", vec![vocab_size]),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.embedding];
        p.extend(self.lstm.params());
        p.push(&self.w_out);
        p.push(&self.b_out);
        p
    }

    /// Unrolls the LSTM over a teacher-forced batch and returns the logits
    /// for every position, stacked step-major to `[(steps * rows) x V]`.
    pub fn unroll_logits(&self, tape: &mut Tape, batch: &TeacherBatch) -> Result<Var> {
        let emb = tape.leaf(self.embedding.tensor());
        let mut h = tape.constant(vec![batch.rows, self.hidden_dim], vec![0.0; batch.rows * self.hidden_dim])?;
        let mut c = h;
        let mut states = Vec::with_capacity(batch.steps);
        for t in 0..batch.steps {
            let x = tape.gather_rows(emb, batch.input_column(t))?;
            let (h2, c2) = self.lstm.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            states.push(h);
        }
        let stacked = tape.concat_rows(&states)?;
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let proj = tape.matmul(stacked, w)?;
        tape.add_row_bias(proj, b)
    }

    /// Mean per-token negative log-likelihood of a teacher-forced batch,
    /// padding masked out, `<eos>` included.
    pub fn batch_nll(&self, tape: &mut Tape, batch: &TeacherBatch) -> Result<Var> {
        let logits = self.unroll_logits(tape, batch)?;
        tape.softmax_cross_entropy(logits, &batch.targets, &batch.mask)
    }

    /// Mean per-token NLL of a single sentence (the `<eos>` step included).
    pub fn sentence_nll(&self, tape: &mut Tape, sentence: &[usize]) -> Result<Var> {
        let batch = TeacherBatch::new(&[sentence])?;
        self.batch_nll(tape, &batch)
    }

    /// Summed NLL over a batch, returned with the token count (used by
    /// perplexity, which averages over a whole split).
    pub fn batch_nll_sum(&self, tape: &mut Tape, batch: &TeacherBatch) -> Result<(Var, usize)> {
        let logits = self.unroll_logits(tape, batch)?;
        let weights: Vec<f64> = batch.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let var = tape.weighted_nll(logits, &batch.targets, &weights)?;
        Ok((var, batch.token_count()))
    }

    fn step_state(&self, tape: &mut Tape, emb: Var, w: Var, b: Var, id: usize, h: Var, c: Var) -> Result<(Var, Var, Vec<f64>)> {
        let x = tape.gather_rows(emb, &[id])?;
        let (h2, c2) = self.lstm.step(tape, x, h, c)?;
        let proj = tape.matmul(h2, w)?;
        let logits = tape.add_row_bias(proj, b)?;
        Ok((h2, c2, tape.values(logits)))
    }

    /// Greedy decoding from `<sos>`: argmax token per step (first index on
    /// ties), stopping at `<eos>` or after `max_len` tokens. The returned
    /// sequence contains neither `<sos>` nor `<eos>`.
    pub fn generate_greedy(&self, max_len: usize) -> Result<Vec<usize>> {
        self.decode(max_len, true, |probs, _| argmax(probs), &mut Rng::from_seed(0), 1.0)
    }

    /// Ancestral sampling from the per-step softmax with a temperature.
    pub fn generate_ancestral(&self, max_len: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<usize>> {
        self.decode(max_len, true, |probs, rng| rng.categorical(probs), rng, temperature)
    }

    /// Samples exactly `len` tokens without stopping at `<eos>` (used by
    /// single-step toys and synthetic corpora).
    pub fn sample_fixed_len(&self, len: usize, temperature: f64, rng: &mut Rng) -> Result<Vec<usize>> {
        self.decode(len, false, |probs, rng| rng.categorical(probs), rng, temperature)
    }

    fn decode(
        &self,
        max_len: usize,
        stop_at_eos: bool,
        pick: impl Fn(&[f64], &mut Rng) -> usize,
        rng: &mut Rng,
        temperature: f64,
    ) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let emb = tape.leaf(self.embedding.tensor());
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let zeros = vec![0.0; self.hidden_dim];
        let mut h = tape.constant(vec![1, self.hidden_dim], zeros.clone())?;
        let mut c = tape.constant(vec![1, self.hidden_dim], zeros)?;
        let mut cur = SOS_ID;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (h2, c2, logits) = self.step_state(&mut tape, emb, w, b, cur, h, c)?;
            h = h2;
            c = c2;
            let probs = softmax_probs(&logits, temperature);
            let id = pick(&probs, rng);
            if stop_at_eos && id == EOS_ID {
                break;
            }
            out.push(id);
            cur = id;
        }
        Ok(out)
    }

    /// LSTM states along a prefix: entry t is the state after consuming
    /// `<sos>` followed by `prefix[..t]` (so entry 0 is the post-`<sos>`
    /// state). Used by MC rollouts to continue partial samples.
    pub(crate) fn prefix_states(&self, prefix: &[usize]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut tape = Tape::new();
        let emb = tape.leaf(self.embedding.tensor());
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let zeros = vec![0.0; self.hidden_dim];
        let mut h = tape.constant(vec![1, self.hidden_dim], zeros.clone())?;
        let mut c = tape.constant(vec![1, self.hidden_dim], zeros)?;
        let mut states = Vec::with_capacity(prefix.len() + 1);
        for &id in std::iter::once(&SOS_ID).chain(prefix.iter()) {
            let (h2, c2, _) = self.step_state(&mut tape, emb, w, b, id, h, c)?;
            h = h2;
            c = c2;
            states.push((tape.values(h), tape.values(c)));
        }
        Ok(states)
    }

    /// Continues sampling from a stored LSTM state until `<eos>` or until
    /// the completed sequence reaches `max_len` tokens.
    pub(crate) fn rollout_from_state(
        &self,
        h0: &[f64],
        c0: &[f64],
        prefix: &[usize],
        max_len: usize,
        rng: &mut Rng,
    ) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let emb = tape.leaf(self.embedding.tensor());
        let w = tape.leaf(self.w_out.tensor());
        let b = tape.leaf(self.b_out.tensor());
        let mut h = tape.constant(vec![1, self.hidden_dim], h0.to_vec())?;
        let mut c = tape.constant(vec![1, self.hidden_dim], c0.to_vec())?;
        let mut seq = prefix.to_vec();
        // state already consumed the prefix; next step needs its last token's
        // logits, so advance from the current state directly
        let mut cur = None;
        while seq.len() < max_len {
            let logits = match cur {
                None => {
                    // logits of the stored state
                    let proj = tape.matmul(h, w)?;
                    let lg = tape.add_row_bias(proj, b)?;
                    tape.values(lg)
                }
                Some(id) => {
                    let (h2, c2, l) = self.step_state(&mut tape, emb, w, b, id, h, c)?;
                    h = h2;
                    c = c2;
                    l
                }
            };
            let probs = softmax_probs(&logits, 1.0);
            let id = rng.categorical(&probs);
            if id == EOS_ID {
                break;
            }
            seq.push(id);
            cur = Some(id);
        }
        Ok(seq)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
