//! Deterministic simulated worker group with AllGather and ring AllReduce.
//!
//! Workers are threads driven either one at a time in rank order or freely in
//! parallel; every collective is a barrier whose result depends only on the
//! contributions in rank order, so both schedulers produce identical values
//! and identical traces. Traffic is logical payload bytes per worker, not a
//! wire or latency model.

mod group;
mod trace;

pub use group::{Communicator, Element, Scheduler, Summable, WorkerGroup};
pub use trace::{
    all_gather_bytes, ring_all_reduce_bytes, CollectiveKind, CollectiveRecord, CollectiveTrace,
    TraceSummary, LENGTH_PREFIX_BYTES,
};
