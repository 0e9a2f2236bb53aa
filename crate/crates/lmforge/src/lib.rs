//! lmforge: a desk-scale language-modeling workbench.
//!
//! The crate covers the full experimental loop for small-corpus language
//! modeling: building a tokenized corpus from a raw news dump, training
//! LSTM language models, sentence VAEs (with four KL-weight schedules) and a
//! seqGAN on it, and evaluating the results (perplexity, sample statistics,
//! latent-space interpolation and 2-D projection). All numeric training runs
//! on a small built-in reverse-mode autodiff engine; every stochastic choice
//! is driven by explicit 64-bit seeds so runs are byte-reproducible.

pub mod corpus;
pub mod error;
pub mod evalgen;
pub mod gradcheck;
pub mod models;
pub mod optim;
pub mod schedules;
pub mod seeding;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
