//! Error type shared across the workbench.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up (matmul inner dims, elementwise args, ...).
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Input outside an operation's documented domain (e.g. log of a
    /// non-positive value).
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// An API contract was violated by the caller (non-scalar loss to
    /// backward, missing gradient at optimizer step, vocab mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Index out of range (token id vs table size, step vs schedule length).
    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    /// Operation received an input it cannot produce a meaningful result for
    /// (empty corpus, fully masked loss, empty split).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Requested split sizes exceed the available pool.
    #[error("split shortfall: requested {requested} sentences but only {available} available")]
    Shortfall { requested: usize, available: usize },

    /// A computation produced NaN/Inf or was aborted for numeric reasons.
    #[error("numerical abort: {0}")]
    Numeric(String),

    /// Malformed input data or file (bad vocab line, bad checkpoint magic).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration (unknown key, bad enum value, out-of-range field).
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
