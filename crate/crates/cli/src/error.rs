use std::path::PathBuf;

use energy_recon::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(CoreError),

    #[error(transparent)]
    Core(CoreError),

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(_) | CliError::Write { .. } => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite { .. } | CoreError::NanGradient(_) | CoreError::KernelUnderflow { .. } => {
                CliError::Numerical(e)
            }
            CoreError::InvalidParameter(_)
            | CoreError::SchemeRequiresIdentity
            | CoreError::DataTermMode(_)
            | CoreError::UnsupportedFormat(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
