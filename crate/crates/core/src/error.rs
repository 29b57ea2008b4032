use thiserror::Error;

/// Errors produced by the simulator, the dual constructions and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("time out of range: {0}")]
    TimeOutOfRange(String),
    #[error("site out of range: {0}")]
    SiteOutOfRange(String),
    #[error("malformed Harris system: {0}")]
    MalformedHarris(String),
    #[error("alphabet mismatch: {0}")]
    Alphabet(String),
    #[error("duplicate label {0}")]
    DuplicateLabel(i64),
    #[error("configuration is not in the interface class: {0}")]
    NotInOmega(String),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
