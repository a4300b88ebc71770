//! Measurement harness for dynamic IVF maintenance policies: ground truth,
//! recall, probe tuning, trace replay and comparison reports.

pub mod clock;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod truth;
pub mod tune;

pub use clock::ClockMode;
pub use config::RunConfig;
pub use error::{BenchError, Result};
pub use run::{run, run_trace, MetricsRow, RunOutput, Summary};
pub use truth::{ground_truth, recall, GroundTruth};
pub use tune::{tune_nprobe, TuneOptions, TuneOutcome};
