use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or values.
    Usage(String),
    /// A library failure, with the pipeline stage it happened in.
    Run {
        stage: String,
        source: mbgibbs::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run { source, .. } => match source.root() {
                mbgibbs::Error::InvalidArgument(_) => EXIT_USAGE,
                mbgibbs::Error::Parse { .. }
                | mbgibbs::Error::Io(_)
                | mbgibbs::Error::UnknownWord(_) => EXIT_DATA,
                _ => EXIT_NUMERIC,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Run { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage name to library errors.
pub trait Context<T> {
    fn stage(self, stage: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for mbgibbs::Result<T> {
    fn stage(self, stage: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Run {
            stage: stage.into(),
            source,
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn stage(self, stage: impl Into<String>) -> CliResult<T> {
        self.map_err(|e| CliError::Run {
            stage: stage.into(),
            source: mbgibbs::Error::Io(e),
        })
    }
}
