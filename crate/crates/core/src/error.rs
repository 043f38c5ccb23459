use thiserror::Error;

/// Crate-wide error type. Numerical routines reject invalid inputs instead
/// of propagating NaNs.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation (wrong sign, non-finite, empty, ...).
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An evaluation point left the admissible range of an operation.
    #[error("argument out of range: {0}")]
    OutOfRange(String),

    /// Two inputs that must agree (grids, dimensions, model/seed) do not.
    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    /// A backward-induction update produced a non-finite nodal value.
    #[error("non-finite value at date index {date}, node {node}")]
    NonFinite { date: usize, node: usize },

    /// A numerical backend failed to reach its target (with diagnostics).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A requested combination is not supported by the chosen model/backend.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
