//! Monte-Carlo rollout rewards and the REINFORCE loss for the seqGAN
//! generator.

use crate::error::{Error, Result};
use crate::models::discriminator::Discriminator;
use crate::models::rnnlm::{GeneratorPolicy, TeacherBatch};
use crate::seeding::{derive_seed, Rng};
use crate::tape::{Tape, Var};

/// Per-position rewards for a generated sequence.
///
/// For every strict prefix `y[..t]` (t = 1..len), the prefix is completed
/// `n_rollouts` times by ancestral sampling from the generator (rollout
/// policy = generator), each completion is scored by the discriminator, and
/// the reward is the mean score. The final position's reward is the
/// discriminator score of the full sequence. Rollout i at position t uses
/// the derived seed `derive_seed(seed, (t - 1) * n_rollouts + i)`.
pub fn mc_rollout_rewards(
    generator: &GeneratorPolicy,
    discriminator: &Discriminator,
    sequence: &[usize],
    n_rollouts: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_rollouts == 0 {
        return Err(Error::contract("mc_rollout_rewards needs n_rollouts >= 1".into()));
    }
    if sequence.is_empty() {
        return Err(Error::DegenerateInput("cannot score an empty sequence".into()));
    }
    let states = generator.prefix_states(sequence)?;
    let mut rewards = Vec::with_capacity(sequence.len());
    for t in 1..=sequence.len() {
        if t == sequence.len() {
            rewards.push(discriminator.score_value(sequence)?);
        } else {
            let (h, c) = &states[t];
            let mut acc = 0.0;
            for i in 0..n_rollouts {
                let rollout_seed = derive_seed(seed, ((t - 1) * n_rollouts + i) as u64);
                let mut rng = Rng::from_seed(rollout_seed);
                let completed =
                    generator.rollout_from_state(h, c, &sequence[..t], max_len, &mut rng)?;
                acc += discriminator.score_value(&completed)?;
            }
            rewards.push(acc / n_rollouts as f64);
        }
    }
    Ok(rewards)
}

/// REINFORCE surrogate loss for one sampled sequence:
/// `-sum_t rewards[t] * log G(y_t | y_{1:t-1})`. Rewards are treated as
/// constants. Minimizing this ascends the expected reward.
pub fn policy_gradient_loss(
    generator: &GeneratorPolicy,
    tape: &mut Tape,
    sequence: &[usize],
    rewards: &[f64],
) -> Result<Var> {
    if rewards.len() != sequence.len() {
        return Err(Error::contract(format!(
            "{} rewards for a sequence of {} tokens",
            rewards.len(),
            sequence.len()
        )));
    }
    if sequence.is_empty() {
        return Err(Error::DegenerateInput("policy gradient over an empty sequence".into()));
    }
    // teacher-force the generator on its own sample; position t's logits
    // condition on <sos> + sequence[..t]
    let batch = TeacherBatch::new(&[sequence])?;
    let logits = generator.unroll_logits(tape, &batch)?;
    // drop the final position (the <eos> step): rewards cover the sampled
    // tokens only
    let mut weights = vec![0.0; batch.steps];
    let mut targets = vec![0usize; batch.steps];
    for t in 0..sequence.len() {
        weights[t] = rewards[t];
        targets[t] = sequence[t];
    }
    tape.weighted_nll(logits, &targets, &weights)
}

/// Subtracts the mean reward from every position (a variance-reducing
/// baseline for REINFORCE).
pub fn apply_mean_baseline(rewards: &mut [f64]) {
    if rewards.is_empty() {
        return;
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    for r in rewards.iter_mut() {
        *r -= mean;
    }
}
