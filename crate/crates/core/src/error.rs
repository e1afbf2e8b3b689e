use std::path::PathBuf;

use crate::imaging::ColorSpace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("unsupported sample depth in {path}: {detail} (only 8-bit images are accepted)")]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("unsupported image format for {0}")]
    UnsupportedFormat(PathBuf),

    #[error("expected {expected:?} image, got {actual:?}")]
    WrongSpace {
        expected: ColorSpace,
        actual: ColorSpace,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite sample at channel {channel}, index {index}")]
    NonFinite { channel: usize, index: usize },

    #[error("image {width}x{height} is smaller than one {block}x{block} block")]
    ImageTooSmall {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("ground truth contains no edge pixels")]
    EmptyGroundTruth,

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error stems from bad user input (files, parameters,
    /// config) rather than from a failure inside a processing stage.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Decode { .. }
            | Error::UnsupportedBitDepth { .. }
            | Error::UnsupportedFormat(_)
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::EmptyGroundTruth => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
