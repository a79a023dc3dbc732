//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (tol {tol:e})")]
    Convergence { iterations: usize, tol: f64 },

    #[error("no quantile table for cell {0}")]
    MissingCell(String),

    #[error("nuisance profile incomplete: {0}")]
    IncompleteProfile(String),

    #[error("degenerate cell at observation {index}: {detail}")]
    DegenerateCell { index: usize, detail: String },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("projection-set violation: {0}")]
    ProjectionSet(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("learner failed on fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data schema violation{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Schema { line: Option<u64>, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn schema(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Schema { line, msg: msg.into() }
    }

    /// Process exit code for the CLI: schema problems exit 2, numerical
    /// degeneracy exits 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } | Error::InvalidArgument(_) | Error::Csv(_) => 2,
            Error::DegenerateCell { .. }
            | Error::DegenerateDesign(_)
            | Error::ProjectionSet(_)
            | Error::Convergence { .. } => 3,
            Error::Fold { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
