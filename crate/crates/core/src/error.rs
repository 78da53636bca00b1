use thiserror::Error;

/// Errors raised by model construction and the numerical drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),
    #[error("invalid spin length 2S = {0}")]
    Spin(i64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("hilbert space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("fit needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
