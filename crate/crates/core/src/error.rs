use std::path::PathBuf;

/// Errors produced by samplers, diagnostics and data handling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The series has zero variance, so autocorrelation is undefined.
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A conditional produced a non-finite parameter.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A model update failed; `cycle` is the scan cycle it happened in.
    #[error("update failed in cycle {cycle}: {source}")]
    Update {
        cycle: u64,
        #[source]
        source: Box<Error>,
    },

    /// Every arm of an adaptation run produced a degenerate trace.
    #[error("all {0} adaptation arms were degenerate")]
    AllArmsDegenerate(usize),

    #[error("word ids outside the vocabulary: {0:?}")]
    UnknownWord(Vec<usize>),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Strips any [`Error::Update`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Update { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
