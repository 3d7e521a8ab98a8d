use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("patch centred at ({cx:.1}, {cy:.1}) lies entirely outside the frame")]
    PatchOutsideFrame { cx: f64, cy: f64 },

    #[error("color names features need a color patch")]
    GrayscaleColorNames,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("degenerate training sample: feature variance is zero")]
    DegenerateSample,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate track id {0}")]
    DuplicateId(u32),

    #[error("no initial boxes in {0}")]
    EmptyPopulation(PathBuf),

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("missing frame {index} ({path})")]
    MissingFrame { index: usize, path: PathBuf },

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("unsupported model format version {0}")]
    ModelVersion(u32),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
