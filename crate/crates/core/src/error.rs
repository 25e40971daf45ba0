use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimMismatch { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sequence of {frames} frames is shorter than the largest shot count {shots}")]
    SequenceTooShort { frames: usize, shots: usize },

    #[error("video `{video_id}`: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss for video `{video_id}` at epoch {epoch}\n{diagnostics}")]
    NonFiniteLoss {
        video_id: String,
        epoch: usize,
        diagnostics: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Hdf5(#[from] hdf5::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the id of the video it came from.
    pub fn in_video(self, video_id: &str) -> Self {
        Error::Video {
            video_id: video_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through per-video wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Video { source, .. } => source.root(),
            other => other,
        }
    }
}
