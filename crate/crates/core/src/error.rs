use thiserror::Error;

use crate::datamodel::ClassId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("classes already registered in an earlier session: {0:?}")]
    Disjointness(Vec<ClassId>),

    #[error("class {0} has no support examples")]
    MissingExample(ClassId),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate basis: {0}")]
    DegenerateBasis(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("class {0} is not active in this session")]
    UnknownClass(ClassId),

    #[error("no snapshot holds class {0}")]
    MissingSnapshot(ClassId),

    #[error("no embedding for class {0}")]
    MissingEmbedding(ClassId),

    #[error("no regularization target for class {0}")]
    MissingTarget(ClassId),

    #[error("snapshot for session {0} already stored")]
    DuplicateSnapshot(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("regularizer kind {kind} cannot be paired with a {prior} prior")]
    ConflictingRegularizer { kind: String, prior: &'static str },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("insufficient examples: {0}")]
    Insufficient(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
