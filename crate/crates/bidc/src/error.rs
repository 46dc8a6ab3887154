use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, classified by the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: not a checkpoint ({message})")]
    Format { path: PathBuf, message: String },
    #[error("{path}: corrupt checkpoint ({message})")]
    Corrupt { path: PathBuf, message: String },
    #[error("incompatible inputs: {0}")]
    Compatibility(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] bidc_core::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 1 for usage and configuration problems, 2 for data problems and 3
    /// for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use bidc_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::Format { .. }
            | CliError::Corrupt { .. }
            | CliError::Compatibility(_)
            | CliError::Data(_) => 2,
            CliError::GradCheck(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) => 1,
                E::Shape { .. }
                | E::Vocab { .. }
                | E::Target { .. }
                | E::Length { .. }
                | E::Alignment { .. }
                | E::EmptyLoss => 2,
                E::DegenerateNorm(_) | E::NonScalarRoot(_) | E::NonFiniteGradient(_) | E::Divergence { .. } => 3,
            },
        }
    }
}
