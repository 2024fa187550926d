//! Sampled softmax with controlled seed groups.
//!
//! Workers that share a seed draw the same candidate words, so the global
//! union of candidates (and with it the output-embedding exchange) shrinks
//! as the number of distinct seeds drops.

mod candidates;
mod seeds;
mod softmax;

pub use candidates::{draw_samples, draw_samples_with, expected_count, union_unique, union_unique_worker, SampleSet, SamplingDistribution};
pub use seeds::{group_count, plan_seeds, LogBase, SeedGroupPlan, SeedPolicy};
pub use softmax::{sampled_softmax_loss, softmax_probs, ScoreVector};
