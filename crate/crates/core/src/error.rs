use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite values at {location}")]
    NonFinite { location: String },

    #[error("bad magic in {what}: expected {expected:?}")]
    BadMagic { what: &'static str, expected: &'static str },

    #[error("unsupported {what} version {found} (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("truncated {what}")]
    Truncated { what: &'static str },

    #[error("checksum mismatch in {what}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        what: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("missing {0}")]
    Missing(&'static str),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "validation",
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::BadMagic { .. } => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Truncated { .. } => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::Missing(_) => "missing",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
