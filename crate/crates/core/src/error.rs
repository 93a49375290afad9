use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("config validation failed:\n  - {}", .0.join("\n  - "))]
    ConfigList(Vec<String>),
    #[error("real LR images cannot be synthesized; they come only from paired data")]
    UnsupportedSynthesis,
    #[error("invalid synthesis target {0}: only bicubic, bilinear and nearest LR domains can be synthesized")]
    InvalidTarget(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("patch size {size} does not fit: {reason}")]
    PatchSize { size: usize, reason: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("input too small: {0}")]
    Size(String),
    #[error("perceptual backbone unavailable: {0}")]
    BackboneUnavailable(String),
    #[error("training diverged at iteration {iteration}: loss term `{term}` is {value}")]
    Divergence {
        term: String,
        iteration: u64,
        value: f64,
    },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
