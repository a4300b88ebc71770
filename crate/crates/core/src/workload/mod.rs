//! Streaming workload generation and the trace format it is replayed from.

mod generator;
pub mod synthetic;
mod spec;
mod trace;

pub use generator::{generate, GeneratedWorkload};
pub use spec::{InitialSize, RwBasis, WorkloadSpec};
pub use synthetic::GaussianMixture;
pub use trace::{
    load_trace, save_trace, sidecar_path, Operation, Trace, TraceHeader, TRACE_FORMAT,
    TRACE_VERSION,
};
