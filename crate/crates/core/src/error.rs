use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes map onto the CLI exit codes: usage 2, data/contract 3,
/// numerical 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("collinear design: {0}")]
    Collinear(String),

    #[error("weak genetic signal: denominator {denominator:e} (pair correlation {correlation:e})")]
    WeakSignal { denominator: f64, correlation: f64 },

    #[error("heritability undefined: total variance is zero")]
    UndefinedHeritability,
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::File { .. }
            | Error::Io(_)
            | Error::Dimension(_)
            | Error::Alignment(_)
            | Error::EmptyOutput(_)
            | Error::InsufficientSample { .. }
            | Error::DegenerateSample(_) => 3,
            Error::SingularDesign(_)
            | Error::DegenerateWeight(_)
            | Error::NoSignal(_)
            | Error::Collinear(_)
            | Error::WeakSignal { .. }
            | Error::UndefinedHeritability => 4,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::File {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let (row, column) = match e.position() {
            Some(p) => (p.line() as usize, 0),
            None => (0, 0),
        };
        Error::Parse {
            row,
            column,
            message: e.to_string(),
        }
    }
}
