use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PcamError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("audio is empty")]
    EmptyAudio,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diverged at epoch {epoch}, segment {segment}: {what} is not finite")]
    Diverged {
        epoch: usize,
        segment: usize,
        what: &'static str,
    },

    #[error("model contains non-finite values in {0}")]
    CorruptModel(&'static str),

    #[error("model file: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("model file: unsupported format version {0}")]
    VersionMismatch(u32),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model file payload has {actual} bytes, header implies {expected}")]
    PayloadSize { expected: u64, actual: u64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PcamError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PcamError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used in the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            PcamError::Io { .. } => "io",
            PcamError::Wav { .. } => "wav",
            PcamError::UnsupportedEncoding(_) => "unsupported_encoding",
            PcamError::EmptyAudio => "empty_audio",
            PcamError::ShapeMismatch(_) => "shape_mismatch",
            PcamError::InvalidConfig(_) => "invalid_config",
            PcamError::InvalidArgument(_) => "invalid_argument",
            PcamError::Diverged { .. } => "diverged",
            PcamError::CorruptModel(_) => "corrupt_model",
            PcamError::BadMagic(_) => "bad_magic",
            PcamError::VersionMismatch(_) => "version_mismatch",
            PcamError::ModelFormat(_) => "model_format",
            PcamError::PayloadSize { .. } => "payload_size",
            PcamError::Csv(_) => "csv",
            PcamError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, PcamError>;
