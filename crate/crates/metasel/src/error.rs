use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("sample {id}: {message}")]
    Sample { id: String, message: String },

    #[error("mask: {0}")]
    Mask(String),

    #[error("split: {0}")]
    Split(String),

    #[error("texture: {0}")]
    Texture(String),

    #[error("model: {0}")]
    Model(String),

    #[error("selector: {0}")]
    Selector(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("fold {fold}, stage {stage}: {message}")]
    FoldStage {
        fold: usize,
        stage: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn sample(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Sample {
            id: id.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
