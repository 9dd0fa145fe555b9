use std::path::PathBuf;

use crate::trainer::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("non-finite value {value} at node {node}")]
    NonFiniteNode { node: usize, value: f64 },

    #[error("operation `{0}` has no jet propagation rule")]
    UnsupportedJetOp(&'static str),

    #[error("capability not available in this build: {0}")]
    Capability(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("unknown problem `{0}` (expected reaction, wave or convection)")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference solution is degenerate (zero denominator in {0})")]
    DegenerateReference(&'static str),

    #[error("oracle guard: {0}")]
    OracleGuard(String),

    #[error("non-finite {what} at iteration {iteration}")]
    Numeric { what: &'static str, iteration: usize },

    #[error("run aborted at iteration {iteration}: {reason}")]
    Aborted {
        iteration: usize,
        reason: String,
        checkpoint: Box<Checkpoint>,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
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
}
