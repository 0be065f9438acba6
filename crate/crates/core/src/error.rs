use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the HMDS library.
#[derive(Debug, Error)]
pub enum HmdsError {
    #[error("degenerate tensor: {0}")]
    DegenerateTensor(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("signal too short: {samples} samples, need at least {window}")]
    SignalTooShort { samples: usize, window: usize },

    #[error("silent recording")]
    SilentRecording,

    #[error("degenerate: residuals vanish")]
    VanishingResiduals,

    #[error("non-finite log density at iteration {iteration}: {dump}")]
    NonFinite { iteration: usize, dump: String },

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV decoding failed")]
    Wav(#[from] hound::Error),

    #[error("JSON decoding failed")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HmdsError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HmdsError {
    let path = path.into();
    move |source| HmdsError::Io { path, source }
}
