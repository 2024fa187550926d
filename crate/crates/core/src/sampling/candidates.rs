use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::SeedGroupPlan;
use crate::cluster::{Communicator, WorkerGroup};
use crate::embed_sync::{gather_unique_indices, unique_global, UniqueIndexVector};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingDistribution {
    /// Every word equally likely, drawn without replacement.
    #[default]
    Uniform,
    /// `P(k) ∝ ln((k + 2) / (k + 1))`, duplicates rejected.
    LogUniform,
}

impl FromStr for SamplingDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "log-uniform" => Ok(Self::LogUniform),
            other => Err(Error::Config(format!("unknown sampling distribution `{other}`"))),
        }
    }
}

/// Candidate words for one worker at one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    /// Sorted, distinct; the draw plus the local targets when `includes_targets`.
    pub candidate_ids: Vec<u32>,
    /// The random draw alone, sorted.
    pub drawn: Vec<u32>,
    pub includes_targets: bool,
}

impl SampleSet {
    pub fn position(&self, id: u32) -> Option<usize> {
        self.candidate_ids.binary_search(&id).ok()
    }
}

/// Uniform draw of `s` distinct words for `worker` at `step`, merged with
/// `targets`.
pub fn draw_samples(
    plan: &SeedGroupPlan,
    worker: usize,
    step: u64,
    s: usize,
    vocab_size: usize,
    targets: &[u32],
) -> Result<SampleSet> {
    draw_samples_with(SamplingDistribution::Uniform, plan, worker, step, s, vocab_size, targets)
}

/// Workers with the same seed draw the same words at the same step; only the
/// merged targets differ.
pub fn draw_samples_with(
    dist: SamplingDistribution,
    plan: &SeedGroupPlan,
    worker: usize,
    step: u64,
    s: usize,
    vocab_size: usize,
    targets: &[u32],
) -> Result<SampleSet> {
    if s > vocab_size {
        return Err(Error::Config(format!("{s} samples from a vocabulary of {vocab_size}")));
    }
    if worker >= plan.g {
        return Err(Error::Config(format!("worker {worker} outside a plan for {} workers", plan.g)));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::Index { id: bad, vocab_size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(plan.seed_of(worker), "draw", step));
    let mut drawn: Vec<u32> = match dist {
        SamplingDistribution::Uniform => rand::seq::index::sample(&mut rng, vocab_size, s)
            .into_iter()
            .map(|i| i as u32)
            .collect(),
        SamplingDistribution::LogUniform => draw_log_uniform(&mut rng, s, vocab_size),
    };
    drawn.sort_unstable();
    let mut candidate_ids = drawn.clone();
    candidate_ids.extend_from_slice(targets);
    candidate_ids.sort_unstable();
    candidate_ids.dedup();
    Ok(SampleSet {
        candidate_ids,
        drawn,
        includes_targets: true,
    })
}

fn draw_log_uniform<R: Rng>(rng: &mut R, s: usize, vocab_size: usize) -> Vec<u32> {
    let log_range = (vocab_size as f64 + 1.0).ln();
    let mut seen = vec![false; vocab_size];
    let mut out = Vec::with_capacity(s);
    while out.len() < s {
        let u: f64 = rng.gen();
        let k = ((u * log_range).exp() as usize).saturating_sub(1).min(vocab_size - 1);
        if !seen[k] {
            seen[k] = true;
            out.push(k as u32);
        }
    }
    out
}

/// Probability that `id` appears in a draw of `s` words.
pub fn expected_count(dist: SamplingDistribution, id: u32, s: usize, vocab_size: usize) -> f64 {
    match dist {
        SamplingDistribution::Uniform => (s as f64 / vocab_size as f64).min(1.0),
        SamplingDistribution::LogUniform => {
            let k = id as f64;
            let p = ((k + 2.0) / (k + 1.0)).ln() / (vocab_size as f64 + 1.0).ln();
            // approximation that treats the s accepted draws as independent
            -f64::exp_m1(s as f64 * f64::ln_1p(-p))
        }
    }
}

/// Global sorted union of every worker's candidates, via the same id
/// exchange as the input embedding.
pub fn union_unique_worker(comm: &Communicator<'_>, label: &str, set: &SampleSet) -> Result<UniqueIndexVector> {
    let local = UniqueIndexVector {
        ids: set.candidate_ids.clone(),
        position_map: (0..set.candidate_ids.len() as u32).collect(),
    };
    let lists = gather_unique_indices(comm, label, &local)?;
    Ok(unique_global(&lists).unique)
}

/// Driver-side union over the group; returns the sorted distinct candidates.
pub fn union_unique(group: &mut WorkerGroup, sets: Vec<SampleSet>) -> Result<Vec<u32>> {
    let mut held = group.run_lockstep(sets, |comm, set| union_unique_worker(comm, "candidates", &set))?;
    Ok(held.swap_remove(0).ids)
}
