use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("matrix `{0}` is singular")]
    Singular(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("riccati iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    RiccatiNotConverged { iterations: usize, residual: f64 },

    #[error("trial diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
