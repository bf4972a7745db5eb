use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of an operation (non-finite angle, negative variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix square root failed even after the jitter ladder.
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        matrix: Option<DMatrix<f64>>,
    },

    /// A sigma point produced a non-finite value when pushed through a model.
    #[error("non-finite output while propagating sigma point {index}")]
    Propagation { index: usize },

    /// Filtering failed at a specific sample of a trajectory.
    #[error("filter failed at sample {index}: {source}")]
    FilterStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// Evidence requested for a segment that is too short to be scored.
    #[error("evidence error: segment of {len} samples is shorter than the minimum of {min}")]
    Evidence { len: usize, min: usize },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, matrix: Option<DMatrix<f64>>) -> Self {
        Error::Numerical {
            message: message.into(),
            matrix,
        }
    }

    /// Process exit status used by the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Numerical { .. } | Error::Propagation { .. } => 3,
            Error::FilterStep { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
