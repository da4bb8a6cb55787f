use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid base measure: {0}")]
    InvalidMeasure(String),
    #[error("value {value} lies outside the support hull [{min}, {max}]")]
    Domain { value: f64, min: f64, max: f64 },
    #[error("invalid motif graph: {0}")]
    InvalidMotif(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
