use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("optimizer failed: {0}")]
    Optimization(String),

    #[error("tilt {vartheta} must be below the base mean {lambda}")]
    InvalidTilt { lambda: f64, vartheta: f64 },

    #[error("no event observed in the sampled batch ({n} samples); increase n_per_iter or warm-start the tilt")]
    NoEventObserved { n: usize },

    #[error("cross-entropy search aborted after {streak} consecutive iterations without events (iteration {iteration}); increase n_per_iter or provide a warm-start tilt")]
    CeStalled { iteration: u32, streak: u32 },

    #[error("simulation diverged at t = {t:.3} s: {what}")]
    NonFiniteState { t: f64, what: String },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
