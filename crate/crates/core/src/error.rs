use std::path::PathBuf;

/// Errors raised across the crate.
///
/// The variants are split by who is at fault: `Parameter`, `Domain`,
/// `Validation` and `Config` describe bad input, everything else is a
/// runtime failure. [`Error::is_validation`] encodes that split for the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    /// A sample cannot be used (for example its mask is empty); callers skip it.
    #[error("sample skipped: {0}")]
    SkipSample(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("missing file {path}")]
    Missing { path: PathBuf },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error was caused by the caller's input rather than by
    /// a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Domain(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Missing { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
