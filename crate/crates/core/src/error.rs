use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// An operation was called in a state its contract forbids
    /// (e.g. stepping a finished episode).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Malformed binary file. `offset` is the byte position at which
    /// decoding failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Poisoning was requested but the dataset contains no frame with the
    /// target action.
    #[error("no frames with target action {action} to poison")]
    EmptyTargetClass { action: crate::env::Action },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
