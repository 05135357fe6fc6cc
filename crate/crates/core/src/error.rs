use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AecError>;

#[derive(Debug, Error)]
pub enum AecError {
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite or otherwise unusable samples in a live stream.
    #[error("stream error: {0}")]
    Stream(String),

    #[error("session poisoned by an earlier stream error")]
    Poisoned,

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("{path}: {reason}")]
    AudioFormat { path: String, reason: String },

    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl AecError {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        AecError::ModelFormat(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AecError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs (bad files, bad shapes,
    /// bad manifests) rather than by a failure while processing.
    pub fn is_format_error(&self) -> bool {
        match self {
            AecError::ModelFormat(_)
            | AecError::AudioFormat { .. }
            | AecError::DatasetFormat(_)
            | AecError::Manifest { .. }
            | AecError::Config(_) => true,
            AecError::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            AecError::Stream(_) | AecError::Poisoned => false,
        }
    }
}
