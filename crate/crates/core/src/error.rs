use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content. `location` is a line number for text formats
    /// and a byte offset for binary ones.
    #[error("{path}:{location}: {message}")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate faces: {faces:?}")]
    DegenerateFaces { faces: Vec<usize> },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correspondence {source_id} -> {target_id}: {message}")]
    Correspondence {
        source_id: String,
        target_id: String,
        message: String,
    },

    #[error("shape network: {0}")]
    Network(String),

    #[error("no path between {from} and {to}")]
    NoPath { from: String, to: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown config key `{key}`; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },

    #[error("scan produced no hit faces")]
    EmptyScan,

    #[error("instance {id}: {source}")]
    Instance {
        id: String,
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

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        location: impl ToString,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            location: location.to_string(),
            message: message.into(),
        }
    }

    /// Validation failures, as opposed to usage or I/O problems.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidMesh(_)
            | Error::DegenerateFaces { .. }
            | Error::Correspondence { .. }
            | Error::Network(_)
            | Error::NoPath { .. }
            | Error::Format { .. } => true,
            Error::Instance { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
