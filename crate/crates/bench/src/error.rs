use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated after operation {op_index}: {detail}")]
    Invariant {
        op_index: usize,
        detail: String,
        dump: Option<PathBuf>,
    },
    #[error(transparent)]
    Core(#[from] adaivf::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// invariant aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use adaivf::Error as E;
        match self {
            BenchError::Config(_) | BenchError::Json(_) => 2,
            BenchError::Core(E::Spec(_) | E::Dimension { .. } | E::Trace { .. } | E::Format(_)) => 2,
            BenchError::Invariant { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
