//! Error type shared across the crate.
//!
//! Variants are grouped by *who got it wrong*: `Config` for bad parameters,
//! `Usage` for call-order mistakes, `Format` for unparseable or inconsistent
//! files, `NonFinite`/`Numeric` for runtime numerical failures, and `Io` for
//! filesystem trouble (always carrying the offending path).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, thresholds, or hyperparameters supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was invoked in an unusable state (e.g. backward without forward).
    #[error("usage error: {0}")]
    Usage(String),

    /// Filesystem failure; the path is the file or directory we were touching.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents are wrong (bad magic, checksum, missing entry).
    #[error("format error: {0}")]
    Format(String),

    /// A NaN or infinity appeared where finite values are required; names the tensor.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A numerical procedure failed to converge or hit a degenerate input.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Shorthand for an `Io` error at `path`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
