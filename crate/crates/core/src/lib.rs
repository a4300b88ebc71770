//! Dynamic IVF vector index with tracked partition statistics and
//! incremental maintenance policies.
//!
//! Everything is generic over the stored scalar ([`f32`] or [`f64`]); the
//! aliases below name the common instantiations.

// `!(x >= lo)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod config;
pub mod error;
pub mod index;
pub mod io;
pub mod maintenance;
pub mod scalar;
pub mod tracking;
pub mod vector;
pub mod workload;

pub use config::IndexConfig;
pub use error::{Error, Result};
pub use index::{IvfIndex, PartitionId, SearchResult, UpdateReport};
pub use scalar::Scalar;
pub use tracking::{GlobalStats, PartitionMeta, TemperatureParams};
pub use vector::{DistanceMetric, VectorDataset, VectorId};

pub type IvfIndexF32 = index::IvfIndex<f32>;
pub type IvfIndexF64 = index::IvfIndex<f64>;
pub type VectorDatasetF32 = vector::VectorDataset<f32>;
pub type VectorDatasetF64 = vector::VectorDataset<f64>;
