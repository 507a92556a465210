use thiserror::Error;

/// Errors produced by the simulation chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    /// Configuration failure, keyed by the dotted path of the offending field.
    #[error("invalid config at `{path}`: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("frequency {frequency} Hz is at or above Nyquist ({nyquist} Hz)")]
    AboveNyquist { frequency: f64, nyquist: f64 },

    #[error("{0} has zero power")]
    ZeroPower(&'static str),

    #[error("record too short: need at least {needed} samples, got {actual}")]
    RecordTooShort { needed: usize, actual: usize },

    #[error("size overflow: {0}")]
    Overflow(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn arg(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}
