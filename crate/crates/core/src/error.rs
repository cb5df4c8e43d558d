use std::io;

/// Errors produced by descriptor construction, persistence and search.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// The bytes do not form a readable NPY or index file.
    #[error("malformed file: {0}")]
    Format(String),

    /// The file is well formed but carries an unsupported dtype, order, rank or version.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("cannot pair layers: local is {local:?} (HxWxD), guide is {guide:?} (HxWxD)")]
    Pairing {
        local: (usize, usize, usize),
        guide: (usize, usize, usize),
    },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("pca fit failed: {0}")]
    Fit(String),

    #[error("index build failed: {0}")]
    Build(String),
}

impl Error {
    /// True for failures of the underlying file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
