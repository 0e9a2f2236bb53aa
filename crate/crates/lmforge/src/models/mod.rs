//! Model families: LSTM language model / generator policy, sentence VAE,
//! and the CNN-highway discriminator with MC-rollout policy gradients.

mod discriminator;
mod lstm;
mod rnnlm;
mod rollout;
mod vae;

pub use discriminator::Discriminator;
pub use lstm::{LstmParams, INIT_BOUND};
pub use rnnlm::{GeneratorPolicy, TeacherBatch};
pub use rollout::{apply_mean_baseline, mc_rollout_rewards, policy_gradient_loss};
pub use vae::{reparameterize, VaeModel};

/// Row softmax with temperature and max-subtraction. At very low
/// temperatures the distribution collapses onto the argmax.
pub fn softmax_probs(logits: &[f64], temperature: f64) -> Vec<f64> {
    let t = temperature.max(1e-12);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| ((x - m) / t).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}
