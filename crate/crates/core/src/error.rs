use thiserror::Error;

use crate::vector::VectorId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid k = {k} for {n} candidates")]
    InvalidK { k: usize, n: usize },

    #[error("invalid probe count {0}")]
    InvalidProbe(usize),

    #[error("index holds no vectors")]
    EmptyIndex,

    #[error("vector id {0} already present")]
    DuplicateId(VectorId),

    #[error("vector id {0} not found")]
    NotFound(VectorId),

    #[error("partition {0} not found")]
    PartitionNotFound(u64),

    #[error("delete of {removed} vectors from a partition of size {size}")]
    Underflow { size: usize, removed: usize },

    #[error("empty delta batch")]
    EmptyDelta,

    #[error("temperature update without probed partitions")]
    NoProbes,

    #[error("non-finite vector component")]
    NonFinite,

    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("workload spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
