use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced in layer {layer}")]
    NonFinite { layer: usize },

    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no candidate node has positive sampling mass below level {level} (frontier of {frontier} nodes starting at node {first})")]
    DisconnectedFrontier {
        level: usize,
        frontier: usize,
        first: usize,
    },

    #[error("infinite variance: node {node} contributes but has zero sampling probability")]
    InfiniteVariance { node: usize },

    #[error("training loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("empty {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::InfiniteVariance { .. } | Error::Diverged { .. }
        )
    }
}
