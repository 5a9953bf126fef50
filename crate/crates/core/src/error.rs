use thiserror::Error;

/// Errors raised by grid, transform, convolution and audit operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular map: |det| = {det:e} is below {threshold:e}")]
    SingularMap { det: f64, threshold: f64 },

    #[error("domain too small: {what} (need extent >= {needed:.4}, have {have:.4})")]
    DomainFit {
        what: String,
        needed: f64,
        have: f64,
    },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("classification: {0}")]
    Classification(String),

    #[error("no counterexample exists: {0}")]
    NoCounterexample(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(what: impl Into<String>, needed: f64, have: f64) -> Self {
        Error::DomainFit {
            what: what.into(),
            needed,
            have,
        }
    }
}
