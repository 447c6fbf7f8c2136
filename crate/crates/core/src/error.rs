//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI reports them: usage problems,
//! data/integrity problems, and numeric failures map to distinct process
//! exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A row in an input file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Structurally valid input that violates a dataset invariant
    /// (duplicate ids, orphan replies, inconsistent outcomes).
    #[error("integrity: {0}")]
    Integrity(String),

    /// Caller misuse: bad flag values, mismatched course shapes.
    #[error("usage: {0}")]
    Usage(String),

    /// Valid files, unusable contents (empty cohort, missing mapping entry).
    #[error("data: {0}")]
    Data(String),

    /// A required column/feature is absent from a table.
    #[error("schema: {0}")]
    Schema(String),

    /// Timestamp outside the configured course window.
    #[error("timestamp {0} is outside the course window")]
    OutOfWindow(i64),

    /// A covariate cannot be standardized.
    #[error("covariate '{0}' has zero variance")]
    ZeroVariance(String),

    /// The observed information matrix could not be factorized;
    /// covariates are likely collinear.
    #[error("singular Hessian: covariates may be collinear")]
    SingularHessian,

    /// Survival fitting requires at least one observed event.
    #[error("no observed events in the cohort")]
    NoEvents,

    /// Any other numeric failure (non-finite values, diverged solver).
    #[error("numeric: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::Parse {
                path: String::new(),
                line: pos.line() as usize,
                msg: e.to_string(),
            },
            None => Error::Data(e.to_string()),
        }
    }
}

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data/integrity, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Data(_)
            | Error::Schema(_)
            | Error::OutOfWindow(_)
            | Error::Io(_) => 3,
            Error::ZeroVariance(_)
            | Error::SingularHessian
            | Error::NoEvents
            | Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
