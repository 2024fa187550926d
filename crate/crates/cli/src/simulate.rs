//! Paired baseline / unique synchronization runs on synthetic Zipf batches.
//!
//! Only the rows a step touches are materialized: ids are remapped through
//! the step's sorted id set, which preserves order and id width, so every
//! byte counter matches a run on the full table.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use uniqsync::cluster::{Scheduler, WorkerGroup};
use uniqsync::corpus::ZipfSampler;
use uniqsync::embed_sync::{sync, EmbeddingTable, GradientBatch, IndexVector, SyncOptions, SyncPath, SyncReport};
use uniqsync::precision::Compression;
use uniqsync::{seed, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub g: usize,
    pub k: usize,
    pub d: usize,
    pub vocab: usize,
    pub zipf_s: f64,
    pub paths: Vec<SyncPath>,
    #[serde(serialize_with = "as_display")]
    pub compress: Compression,
    pub steps: usize,
    pub lr: f64,
    /// Small integer gradients, for which both paths agree bit for bit.
    pub integer_grads: bool,
    #[serde(serialize_with = "as_display")]
    pub scheduler: Scheduler,
}

fn as_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResult {
    pub step: usize,
    pub u_g: usize,
    pub reports: BTreeMap<String, SyncReport>,
    /// Largest elementwise relative difference between the paths' tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rel_diff: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PathTotals {
    pub index_sent: u64,
    pub gradient_sent: u64,
    pub gradient_received: u64,
    pub gradient_peak: u64,
    pub total_sent: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub config: SimulateConfig,
    pub steps: Vec<StepResult>,
    pub totals: BTreeMap<String, PathTotals>,
    /// Unique over baseline gradient-phase bytes sent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_ratio: Option<f64>,
}

pub struct Simulation {
    pub report: SimulateReport,
    pub trace_jsonl: String,
}

fn init_value(id: u32, col: usize) -> f64 {
    // multiples of 1/16, exact under the integer gradient mode
    ((id as usize * 31 + col * 7) % 17) as f64 / 16.0 - 0.5
}

pub fn batches(cfg: &SimulateConfig, master: u64, step: usize) -> Result<(Vec<Vec<u32>>, Vec<Vec<f64>>)> {
    let sampler = ZipfSampler::new(cfg.vocab, cfg.zipf_s)?;
    let id_base = seed::derive(master, "simulate-ids");
    let grad_base = seed::derive(master, "simulate-grads");
    let mut ids = Vec::with_capacity(cfg.g);
    let mut grads = Vec::with_capacity(cfg.g);
    for w in 0..cfg.g {
        let index = (step * cfg.g + w) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(id_base, "worker", index));
        ids.push(sampler.stream(&mut rng, cfg.k));
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(grad_base, "worker", index));
        grads.push(
            (0..cfg.k * cfg.d)
                .map(|_| {
                    if cfg.integer_grads {
                        rng.gen_range(-8i32..=8) as f64
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect(),
        );
    }
    Ok((ids, grads))
}

pub fn run(cfg: &SimulateConfig, master: u64) -> Result<Simulation> {
    let mut group = WorkerGroup::with_scheduler(cfg.g, cfg.scheduler)?;
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut totals: BTreeMap<String, PathTotals> = BTreeMap::new();
    for step in 0..cfg.steps {
        let (ids, grads) = batches(cfg, master, step)?;
        let mut touched: Vec<u32> = ids.concat();
        touched.sort_unstable();
        touched.dedup();
        let compact = |id: &u32| touched.binary_search(id).expect("id was collected") as u32;
        let js = ids
            .iter()
            .map(|w| IndexVector::new(w.iter().map(compact).collect()))
            .collect::<Result<Vec<_>>>()?;
        let deltas = grads
            .into_iter()
            .map(|g| GradientBatch::new(cfg.d, g))
            .collect::<Result<Vec<_>>>()?;
        let start = touched
            .iter()
            .flat_map(|&id| (0..cfg.d).map(move |c| init_value(id, c)))
            .collect();
        let start = EmbeddingTable::from_rows(touched.len(), cfg.d, start)?;

        let mut reports = BTreeMap::new();
        let mut finals = Vec::new();
        for &path in &cfg.paths {
            let opts = SyncOptions::new(cfg.lr)
                .with_compression(cfg.compress)
                .with_label(path.to_string());
            let mut tables = vec![start.clone(); cfg.g];
            let report = sync(path, &mut group, &mut tables, &js, &deltas, &opts)?;
            let t = totals.entry(path.to_string()).or_default();
            t.index_sent += report.index_phase.total_sent();
            t.gradient_sent += report.gradient_phase.total_sent();
            t.gradient_received += report.gradient_phase.total_received();
            t.gradient_peak = t.gradient_peak.max(report.gradient_phase.peak_resident);
            t.total_sent += report.total_sent();
            reports.insert(path.to_string(), report);
            finals.push(tables.swap_remove(0));
        }
        let max_rel_diff = (finals.len() == 2).then(|| max_rel_diff(&finals[0], &finals[1]));
        steps.push(StepResult {
            step,
            u_g: touched.len(),
            reports,
            max_rel_diff,
        });
    }
    let ratio = |f: fn(&PathTotals) -> u64| match (totals.get("unique"), totals.get("baseline")) {
        (Some(u), Some(b)) if f(b) > 0 => Some(f(u) as f64 / f(b) as f64),
        _ => None,
    };
    let gradient_ratio = ratio(|t| t.gradient_sent);
    let peak_ratio = ratio(|t| t.gradient_peak);
    Ok(Simulation {
        report: SimulateReport {
            config: cfg.clone(),
            steps,
            totals,
            gradient_ratio,
            peak_ratio,
        },
        trace_jsonl: group.trace().to_json_lines(),
    })
}

fn max_rel_diff(a: &EmbeddingTable, b: &EmbeddingTable) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}
