use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: no such file or directory", .0.display())]
    MissingPath(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: cannot decode image: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}, line {line}: {message}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: frame is {found_width}x{found_height}, stack is {width}x{height}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        width: usize,
        height: usize,
        found_width: usize,
        found_height: usize,
    },

    #[error("{}: payload is {actual} bytes, metadata declares {expected} ({} bytes short)", path.display(), expected - actual)]
    ShortPayload {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{}: empty stack", .0.display())]
    EmptyStack(PathBuf),

    #[error("non-finite value {value} in frame {frame} at pixel (x={x}, y={y})")]
    NonFinite {
        frame: usize,
        x: usize,
        y: usize,
        value: f64,
    },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("track {atom_id}, frame {frame}: no detected center at ({x}, {y})")]
    MissingCenter {
        atom_id: usize,
        frame: usize,
        x: f64,
        y: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by parameters rather than input data.
    pub fn is_param_error(&self) -> bool {
        matches!(self, Error::InvalidParam(_))
    }

    /// True for errors that point to inconsistent intermediate data rather than
    /// bad user input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::MissingCenter { .. })
    }
}
