use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the experiment runner, grouped by what the user has to fix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error in {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("missing {what} at {path}; run `remix {command}` first")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        command: &'static str,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] remix_re::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category used as the process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::ConfigFile { .. } => 2,
            Self::Core(
                remix_re::Error::Config(_) | remix_re::Error::InvalidFraction(_) | remix_re::Error::LayerNotInMixSet { .. },
            ) => 2,
            Self::MissingArtifact { .. } => 3,
            Self::Io { .. } => 4,
            Self::Core(remix_re::Error::Io { .. }) => 4,
            Self::Core(_) => 5,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
