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

    /// Malformed JSON; `line` and `column` are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A document parsed but does not carry the expected structure.
    #[error("schema error in feature {feature}: {message}")]
    Schema { feature: String, message: String },

    #[error("feature {feature} has level `{found}`, expected `{expected}`")]
    LevelMismatch {
        feature: String,
        expected: String,
        found: String,
    },

    #[error("validation error at {context}: {message}")]
    Validation { context: String, message: String },

    /// Raster header problems.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("expected {expected} raster values, found {found}")]
    Truncation { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("grid alignment mismatch: {0}")]
    Alignment(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("scenario generation failed: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn schema(feature: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            feature: feature.into(),
            message: message.into(),
        }
    }

    /// Short stable name of the error class, used in machine-readable reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::LevelMismatch { .. } => "level_mismatch",
            Error::Validation { .. } => "validation",
            Error::Format { .. } => "format",
            Error::Truncation { .. } => "truncation",
            Error::Parameter(_) => "parameter",
            Error::Alignment(_) => "alignment",
            Error::Configuration(_) => "configuration",
            Error::Geometry(_) => "geometry",
            Error::Generation(_) => "generation",
        }
    }
}
