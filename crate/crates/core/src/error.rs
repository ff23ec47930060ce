use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),

    #[error("invalid coherence spec: {0}")]
    InvalidCoherence(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("anti-aliasing rule violated: n_phi ({n_phi}) must be >= 8 * {what} ({limit})")]
    Aliasing {
        n_phi: usize,
        what: &'static str,
        limit: usize,
    },

    #[error("mode window mismatch: {0} vs {1}")]
    WindowMismatch(usize, usize),

    #[error("mode {l} outside window [-{l_max}, {l_max}]")]
    OutOfWindow { l: i64, l_max: usize },

    #[error("at least 2 realizations are required, got {0}")]
    InsufficientRealizations(u64),

    #[error("mean intensity is zero for mode {0} (degenerate envelope or mask)")]
    ZeroMeanIntensity(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
