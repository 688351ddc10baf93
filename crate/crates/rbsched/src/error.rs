use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (zero users, mismatched profile list, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's contract, e.g. an allocation that
    /// exceeds the resource budget or a user's outstanding demand.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The operation cannot run yet (empty replay buffer).
    #[error("not ready: {0}")]
    NotReady(String),

    /// Bad command-line or file input.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("failed to read {path}: {source}")]
    ReadFile {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
