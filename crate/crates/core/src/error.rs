use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operation undefined on the zero measure")]
    ZeroMeasure,
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("index {index} out of range for {len} blocks")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("integral diverges: {0}")]
    Divergence(String),
    #[error("quadrature failed to reach tolerance (achieved {achieved:e})")]
    Quadrature { achieved: f64 },
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("finite-difference step underflow")]
    StepUnderflow,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
