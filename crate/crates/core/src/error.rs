use std::path::PathBuf;

/// Errors raised across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, dimensions or identifiers that do not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// Arguments outside an operation's domain.
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Corrupt or incompatible on-disk artifacts.
    #[error("format error: {0}")]
    Format(String),
    #[error("conversion error: layer `{layer}` {reason}")]
    Conversion { layer: String, reason: String },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
