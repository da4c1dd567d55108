use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("divergent moment: alpha + s = {0} is not positive")]
    DivergentMoment(f64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid offspring distribution: {0}")]
    InvalidDistribution(String),
    #[error("unsupported regime: {0}")]
    Unsupported(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unstable ratio: denominator {mean} within 3 standard errors ({se}) of zero")]
    UnstableRatio { mean: f64, se: f64 },
    #[error("vertex cap of {0} exceeded")]
    VertexCap(usize),
    #[error("series did not converge within {0} terms")]
    SeriesTruncation(usize),
    #[error("parameter mismatch: {0}")]
    ParameterMismatch(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
