use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("non-binary output at row {row}, column '{column}': {value:?}")]
    NonBinaryOutput {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-numeric input at row {row}, column '{column}': {value:?}")]
    NonNumericInput {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite input at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },

    #[error("expected at least {expected} columns, found {found}")]
    TooFewColumns { expected: usize, found: usize },

    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dataset body is empty")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed model file (line {line}): {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error("non-finite objective while fitting output dimension {dim}")]
    NonFiniteObjective { dim: usize },

    #[error("solver did not converge after {iterations} iterations (KKT gap {gap:.3e}, tol {tol:.3e})")]
    SolverNotConverged {
        iterations: usize,
        gap: f64,
        tol: f64,
    },

    #[error("representation 'ours' requires a fitted chain model")]
    MissingModel,

    #[error("labels must contain at least one positive and one negative")]
    DegenerateLabels,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
