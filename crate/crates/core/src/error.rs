use thiserror::Error;

/// Errors raised by model construction, simulation and analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} must be strictly positive, got {value}")]
    NonPositive { what: String, value: f64 },
    #[error("line {line} references missing load node {node}")]
    DanglingEndpoint { line: usize, node: usize },
    #[error("cyber graph is disconnected among active DGs")]
    DisconnectedCyberGraph,
    #[error("invalid topology mask: {0}")]
    InvalidMask(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid voltage envelope: {0}")]
    InvalidEnvelope(String),
    #[error("singular fast-system matrix: {0}")]
    Singular(String),
    #[error("state diverged at t = {time} s")]
    Divergence { time: f64 },
    #[error("Newton iteration failed after {iterations} iterations (best scaled residual {residual:e})")]
    NewtonFailed { iterations: usize, residual: f64 },
    #[error("unknown strategy id {0}")]
    UnknownStrategy(usize),
    #[error("event targets nonexistent element: {0}")]
    UnknownTarget(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn positive(what: impl Into<String>, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { what: what.into(), value })
    }
}
