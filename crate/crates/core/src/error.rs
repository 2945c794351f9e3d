use thiserror::Error;

/// Errors produced by the model, reservoir and evaluation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical blow-up at t = {time}: |component| = {magnitude:e} exceeds bound {bound:e}")]
    NumericalBlowup {
        time: f64,
        magnitude: f64,
        bound: f64,
    },

    #[error("spectral radius estimation did not converge after {iterations} iterations")]
    SpectralRadiusEstimation { iterations: usize },

    #[error("invalid input partition: {0}")]
    InvalidPartition(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("singular system in ridge regression (X Xᵀ + γI is not positive definite)")]
    SingularSystem,

    #[error("readout has not been trained")]
    UntrainedReadout,

    #[error("empty averaging window")]
    EmptyWindow,

    #[error("reference value is zero")]
    ZeroReference,

    #[error("checkpoint parse error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
