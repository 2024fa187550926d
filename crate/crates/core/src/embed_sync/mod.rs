//! Embedding-gradient synchronization.
//!
//! The baseline gathers every worker's `K × D` gradient rows and applies them
//! one by one. The unique path exchanges only ids first, agrees on the sorted
//! set of distinct ids for the step, and AllReduces one `U_g × D` matrix in
//! which every worker has placed its locally reduced rows.

mod plan;
mod steps;
mod sync;
mod types;

pub use plan::{complexity_plan, ComplexityPlan};
pub use steps::{
    gather_unique_indices, lookup, reduce_local, scatter_expand, unique_global, unique_local,
    GlobalUnique, INDEX_BYTES,
};
pub use sync::{
    sync, sync_baseline, sync_baseline_worker, sync_unique, sync_unique_worker, sync_worker,
    PhaseBytes, SyncOptions, SyncPath, SyncReport, WorkerSync, VALUE_BYTES,
};
pub use types::{EmbeddingTable, GradientBatch, IndexVector, ScatterMatrix, UniqueIndexVector};
