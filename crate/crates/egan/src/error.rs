use std::path::Path;
use std::process::ExitCode;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Core(#[from] egan_core::Error),

    /// A scientific check did not pass.
    #[error("check failed: {0}")]
    CheckFailed(String),

    /// Training hit a non-finite loss or parameter.
    #[error("training diverged: {source}")]
    Diverged { source: egan_core::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// 2 for scientific failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::CheckFailed(_) | Self::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
