use thiserror::Error;

/// Errors produced anywhere in the embedding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("softmax row {row} has no unmasked entries")]
    DegenerateSoftmax { row: usize },

    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    #[error("event has no edges in any snapshot")]
    EmptyEvent,

    #[error("window underflow: k={k}, l={l}")]
    WindowUnderflow { k: usize, l: usize },

    #[error("snapshot index {k} out of range for event with {len} snapshots")]
    OutOfRange { k: usize, len: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient unobserved links: {found} < {required}")]
    InsufficientLinks { found: usize, required: usize },

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error at {file}:{line}: {detail}")]
    Parse { file: String, line: usize, detail: String },

    #[error("duplicate edge ({u}, {v}) at {file}:{line}")]
    DuplicateEdge { file: String, line: usize, u: u64, v: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape { op, detail: detail.into() })
}
