use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CfcmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CfcmError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("graph is not connected")]
    Disconnected,

    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("forest root set does not match the counters it is accumulated into")]
    RootMismatch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("random walk exceeded {0} steps")]
    WalkLimit(u64),

    #[error("matrix is singular or not positive definite ({0})")]
    Singular(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{what} of size {size} exceeds the limit {limit}")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("record encoding: {0}")]
    Encoding(String),
}

impl CfcmError {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CfcmError::Singular(_) | CfcmError::NoConvergence { .. } | CfcmError::WalkLimit(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CfcmError::InvalidArgument(msg.into())
    }
}
