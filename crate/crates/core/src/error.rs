use thiserror::Error;

/// Errors produced while building networks, schedules and reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network size {0}: at least 2 nodes are required")]
    InvalidSize(usize),

    #[error("self-channel requested for node {0}")]
    SelfChannel(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A scheme precondition that depends on problem sizes (e.g. the
    /// target-count condition of the generalized multiple-access problem).
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("degenerate run: {0}")]
    Degenerate(String),

    #[error("{count} bit batches were never delivered (first: {source_node} -> {destination})")]
    Incomplete {
        count: usize,
        source_node: usize,
        destination: usize,
    },

    #[error("oracle mismatch: {0}")]
    Mismatch(String),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
