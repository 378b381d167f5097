use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("{origin}: field `{field}`: {message}")]
    Field {
        origin: String,
        field: String,
        message: String,
    },

    #[error("{module} failed: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: bangcross::Error,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv encoding: {0}")]
    Csv(#[from] csv::Error),

    #[error("json encoding: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown ladder `{0}` (expected one of: ratio, tol, series, lambda)")]
    UnknownLadder(String),

    #[error("no acceptance check carries the tag `{0}`")]
    UnknownTag(String),

    #[error("ladder `{ladder}` is not applicable: {reason}")]
    Ladder { ladder: String, reason: String },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Tag a core error with the module it came from.
pub fn numerical(module: &'static str) -> impl FnOnce(bangcross::Error) -> HarnessError {
    move |source| HarnessError::Numerical { module, source }
}
