use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// A caller broke an API contract (backward on a non-scalar, missing gradient, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("MS band {band} has zero response at every HS wavelength")]
    DegenerateBand { band: usize },

    #[error("spectral gradients need at least 2 bands, got {0}")]
    InsufficientBands(usize),

    #[error("degenerate SRF: {0}")]
    DegenerateSrf(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::InvalidShape(msg.into())
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}
