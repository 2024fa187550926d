//! Communication- and memory-reduction techniques for data-parallel embedding
//! training, run on a deterministic simulated worker group.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: tokenization, vocabularies, Zipf streams, type/token curves
//!   and power-law fits.
//! * [`cluster`]: a lockstep worker group with AllGather / ring AllReduce and
//!   exact byte accounting.
//! * [`embed_sync`]: dense AllGather synchronization of embedding gradients
//!   and the unique-index exchange, plus the closed-form complexity planner.
//! * [`sampling`]: seed-group planning, candidate drawing and sampled softmax.
//! * [`precision`]: scaled binary16 payload codec.
//! * [`trainer`]: a toy pooled-embedding language model trained on the
//!   simulator, with perplexity / bits-per-character metrics.

pub mod cluster;
pub mod corpus;
pub mod embed_sync;
mod error;
pub mod precision;
pub mod sampling;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
