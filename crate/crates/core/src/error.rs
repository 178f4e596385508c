use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite training loss at epoch {epoch}, iteration {iteration}; batch indices {batch:?}")]
    Diverged {
        epoch: usize,
        iteration: usize,
        batch: Vec<usize>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
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
}
