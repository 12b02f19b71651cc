use std::path::PathBuf;

use kinespike::Error;

/// Failures of a command, each mapped to a process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {}: run `kinespike {command}` first", artifact.display())]
    Dependency {
        artifact: PathBuf,
        command: &'static str,
    },
    #[error("stale {}: {reason}; re-run `kinespike {command}`", artifact.display())]
    Stale {
        artifact: PathBuf,
        command: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 2 config, 3 dependency, 4 numeric or training failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency { .. } | CliError::Stale { .. } => 3,
            CliError::Core(e) => match e {
                Error::Schema(_) | Error::Input(_) => 2,
                Error::Numeric(_) | Error::Training { .. } => 4,
                Error::Format(_) | Error::Conversion { .. } | Error::Io { .. } => 1,
            },
        }
    }

    pub(crate) fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }

    /// Treats a core validation failure as a configuration problem.
    pub(crate) fn from_config(e: Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
