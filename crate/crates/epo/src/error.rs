//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by training, evolution, and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an API contract (bad dimensions, empty population,
    /// invalid probability, ...). The message names the violated condition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration file or `key=value` override could not be parsed or
    /// referred to an unknown key.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A forward or backward pass produced a non-finite value. Training is
    /// aborted rather than silently poisoning the parameter vector.
    #[error("non-finite value in {stage} (layer {layer})")]
    NonFinite {
        /// Which computation produced the value, e.g. "forward activation".
        stage: &'static str,
        /// Index of the offending layer.
        layer: usize,
    },

    /// The scalar training loss became non-finite.
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    /// A checkpoint file was malformed or written by an incompatible version.
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a [`Error::Contract`] with a formatted message.
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Shorthand for a [`Error::Config`] with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
