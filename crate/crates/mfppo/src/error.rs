//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building, training, or auditing a model.
#[derive(Debug, Error)]
pub enum MfError {
    /// A structural input was empty or internally inconsistent.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An index (state, action, agent) fell outside its declared range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Two containers that must agree in length did not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// A scalar parameter violated its domain (negative radius, gamma >= 1, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A probability vector failed validation (negative mass, sum != 1).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// An exact enumeration was requested on an instance too large to enumerate.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// A training loss or network output stopped being finite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An environment reward left the declared bound.
    #[error("reward bound violated: {0}")]
    RewardBound(String),

    /// A run configuration file could not be parsed or validated.
    #[error("config: {0}")]
    Config(String),

    /// A checkpoint file was malformed or incompatible.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MfError>;
