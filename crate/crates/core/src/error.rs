use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("item {item} is labeled both {first} and {second}")]
    GroupConflict {
        item: String,
        first: String,
        second: String,
    },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("non-finite value while training on triplet (user {user}, pos {positive}, neg {negative})")]
    NonFinite {
        user: String,
        positive: String,
        negative: String,
    },

    #[error("unknown {kind} identifier {id:?}")]
    Lookup { kind: &'static str, id: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

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

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
