use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("invalid Gaussian {index}: {msg}")]
    Validation { index: usize, msg: String },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("image codec error: {0}")]
    Codec(String),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoPath { path, source }
    }

    /// True for errors caused by the environment rather than by the caller's inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Io(_) | Error::IoPath { .. })
    }
}
