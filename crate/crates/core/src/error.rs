use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph disconnected: {0}")]
    Disconnected(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("dense oracle limited to {cap} nodes, got {n}")]
    TooLarge { n: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures rooted in floating-point numerics rather than input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Disconnected(_))
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            msg: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
