use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// Newton iteration gave up. `trace` holds the residual norm at every iterate.
    #[error("Newton solver did not converge (residual {residual:.3e} after {} iterations)", .trace.len().saturating_sub(1))]
    NonConvergence { residual: f64, trace: Vec<f64> },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for failures of the numerics (as opposed to usage or I/O problems).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EigenNonConvergence(_)
            | Error::Singular(_)
            | Error::NonConvergence { .. }
            | Error::Divergence { .. } => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Process exit code: 1 usage, 2 numerical failure, 3 integrity or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => 1,
            e if e.is_numerical() => 2,
            Error::Sample { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
