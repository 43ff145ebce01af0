use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit together.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Invalid configuration value or unknown name.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data does not satisfy a pipeline precondition.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed portable pixmap / graymap bytes.
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    /// Malformed or inconsistent weight / checkpoint / manifest file.
    #[error("load error at byte {offset}: {reason}")]
    Load { offset: usize, reason: String },

    /// NaN or infinity where a finite value is required.
    #[error("numeric error in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension { .. } => 1,
            Error::Data(_) | Error::Decode { .. } | Error::Load { .. } | Error::Io { .. } => 2,
            Error::Numeric { .. } => 3,
        }
    }
}
