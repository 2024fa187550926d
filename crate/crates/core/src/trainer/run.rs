use serde::{Deserialize, Serialize};

use super::config::TrainerConfig;
use super::model::{evaluate, init_table, step_gradients, MetricsRecord};
use crate::cluster::{CollectiveTrace, WorkerGroup};
use crate::corpus::TokenStream;
use crate::embed_sync::{sync_worker, EmbeddingTable, SyncOptions};
use crate::precision::FlushCensus;
use crate::sampling::{draw_samples_with, expected_count, plan_seeds, SeedGroupPlan};
use crate::{Error, Result};

pub const INPUT_LABEL: &str = "input";
pub const OUTPUT_LABEL: &str = "output";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    pub steps: u64,
    /// Mean of the epoch's per-step sampled losses.
    pub train_ce: f64,
    /// Full-softmax metrics on the held-out tail, taken after the epoch.
    pub eval: Option<MetricsRecord>,
}

/// Bytes sent, summed over workers, per trace label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficBreakdown {
    pub input_index: u64,
    pub input_gradient: u64,
    pub output_index: u64,
    pub output_gradient: u64,
}

impl TrafficBreakdown {
    fn from_trace(trace: &CollectiveTrace) -> Self {
        let mut out = Self::default();
        for r in &trace.records {
            let sent: u64 = r.per_worker_sent.iter().sum();
            match r.label.as_str() {
                "input/index" => out.input_index += sent,
                "input/gradient" => out.input_gradient += sent,
                "output/index" => out.output_index += sent,
                "output/gradient" => out.output_gradient += sent,
                _ => {}
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.input_index + self.input_gradient + self.output_index + self.output_gradient
    }

    /// The gradient-value share, the only part compression touches.
    pub fn value_bytes(&self) -> u64 {
        self.input_gradient + self.output_gradient
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub master_seed: u64,
    pub lr_multiplier: f64,
    pub group_count: usize,
    pub train_tokens: usize,
    pub eval_tokens: usize,
    pub steps_per_epoch: u64,
    pub epochs: Vec<EpochSummary>,
    pub traffic: TrafficBreakdown,
    pub mean_u_g_input: f64,
    pub mean_u_g_output: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub census: Option<FlushCensus>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRecord>,
    pub report: TrainReport,
    pub input: EmbeddingTable,
    pub output: EmbeddingTable,
    pub trace: CollectiveTrace,
}

impl TrainOutcome {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(MetricsRecord::CSV_HEADER);
        out.push('\n');
        for m in &self.metrics {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

struct Worker {
    input: EmbeddingTable,
    output: EmbeddingTable,
}

struct StepOutcome {
    loss_sum: f64,
    contexts: usize,
    u_g_input: usize,
    u_g_output: usize,
    census: FlushCensus,
}

/// Splits `tokens` into the training head and the held-out tail.
pub fn split(tokens: &[u32], eval_fraction: f64) -> (&[u32], &[u32]) {
    let eval = (tokens.len() as f64 * eval_fraction).floor() as usize;
    tokens.split_at(tokens.len() - eval)
}

struct StepContext<'a> {
    cfg: &'a TrainerConfig,
    plan: &'a SeedGroupPlan,
    train: &'a [u32],
    step: u64,
    /// Step index within the epoch; picks the corpus window.
    offset: usize,
    in_opts: &'a SyncOptions,
    out_opts: &'a SyncOptions,
}

fn worker_step(comm: &crate::cluster::Communicator<'_>, w: &mut Worker, sc: &StepContext<'_>) -> Result<StepOutcome> {
    let cfg = sc.cfg;
    comm.set_tag(sc.step);
    let rank = comm.rank();
    let start = (sc.offset * cfg.g + rank) * cfg.k;
    let tokens = &sc.train[start..start + cfg.k + 1];
    let targets: Vec<u32> = (1..=cfg.contexts_per_step()).map(|j| tokens[j * cfg.c]).collect();
    let set = draw_samples_with(cfg.sampling, sc.plan, rank, sc.step, cfg.s, cfg.vocab_size, &targets)?;
    let log_q: Option<Vec<f64>> = cfg.expected_count_correction.then(|| {
        set.candidate_ids
            .iter()
            .map(|&id| expected_count(cfg.sampling, id, cfg.s, cfg.vocab_size).ln())
            .collect()
    });
    let grads = step_gradients(&w.input, &w.output, tokens, cfg.c, &set.candidate_ids, log_q.as_deref())?;

    let a = sync_worker(cfg.path, comm, &mut w.input, &grads.input_ids, &grads.input_grad, sc.in_opts)?;
    let b = sync_worker(cfg.path, comm, &mut w.output, &grads.output_ids, &grads.output_grad, sc.out_opts)?;
    let mut census = a.census;
    census += b.census;
    Ok(StepOutcome {
        loss_sum: grads.loss_sum,
        contexts: grads.contexts,
        u_g_input: a.u_g,
        u_g_output: b.u_g,
        census,
    })
}

fn check_consistent(workers: &[Worker]) -> Result<()> {
    let first = &workers[0];
    for (r, w) in workers.iter().enumerate().skip(1) {
        if !w.input.bit_eq(&first.input) || !w.output.bit_eq(&first.output) {
            return Err(Error::Consistency(format!("rank {r} tables diverged from rank 0")));
        }
    }
    Ok(())
}

/// Data-parallel training over `corpus`. Every worker keeps its own copy of
/// both tables; the copies stay bit-identical after each synchronization.
pub fn train(cfg: &TrainerConfig, corpus: &TokenStream, master_seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(&bad) = corpus.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Index { id: bad, vocab_size: cfg.vocab_size });
    }
    let (train_tokens, eval_tokens) = split(&corpus.ids, cfg.eval_fraction);
    let per_step = cfg.g * cfg.k;
    if train_tokens.len() < per_step + 1 {
        return Err(Error::Config(format!(
            "corpus has {} training tokens; one step needs {}",
            train_tokens.len(),
            per_step + 1
        )));
    }
    let steps_per_epoch = ((train_tokens.len() - 1) / per_step) as u64;
    let mut warnings = Vec::new();
    let leftover = train_tokens.len() - 1 - steps_per_epoch as usize * per_step;
    if leftover > 0 {
        warnings.push(format!("{leftover} training tokens per epoch do not fill a step and are skipped"));
    }
    let evaluable = eval_tokens.len() > cfg.c;
    if !evaluable {
        warnings.push("held-out tail too short to evaluate".into());
    }

    let plan = plan_seeds(cfg.g, cfg.seed_policy, master_seed)?;
    let input = init_table(cfg.vocab_size, cfg.d, cfg.init_scale, master_seed, "init-input");
    let output = init_table(cfg.vocab_size, cfg.d, cfg.init_scale, master_seed, "init-output");
    let mut workers: Vec<Worker> = (0..cfg.g)
        .map(|_| Worker {
            input: input.clone(),
            output: output.clone(),
        })
        .collect();
    let mut group = WorkerGroup::with_scheduler(cfg.g, cfg.scheduler)?;

    let mut metrics = Vec::new();
    let mut epochs = Vec::new();
    let mut bytes_total = 0u64;
    let mut seen_records = 0;
    let mut census = FlushCensus::default();
    let (mut u_in, mut u_out) = (0u64, 0u64);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let in_opts = SyncOptions::new(lr).with_compression(cfg.compression).with_label(INPUT_LABEL);
        let out_opts = SyncOptions::new(lr).with_compression(cfg.compression).with_label(OUTPUT_LABEL);
        let mut ce_sum = 0.0;
        for offset in 0..steps_per_epoch as usize {
            let sc = StepContext {
                cfg,
                plan: &plan,
                train: train_tokens,
                step,
                offset,
                in_opts: &in_opts,
                out_opts: &out_opts,
            };
            let outcomes = group.run_lockstep(workers.iter_mut().collect(), |comm, w| worker_step(comm, w, &sc))?;
            let (mut loss, mut n) = (0.0, 0usize);
            for o in &outcomes {
                loss += o.loss_sum;
                n += o.contexts;
                census += o.census;
            }
            u_in += outcomes[0].u_g_input as u64;
            u_out += outcomes[0].u_g_output as u64;
            let fresh = group.trace().since(seen_records);
            seen_records = group.trace().len();
            bytes_total += CollectiveTrace::summarize(fresh).total_sent;
            let ce = loss / n as f64;
            if !ce.is_finite() {
                return Err(Error::Numeric(format!("loss became {ce} at step {step}")));
            }
            ce_sum += ce;
            metrics.push(MetricsRecord::from_ce(step, ce, bytes_total));
            step += 1;
        }
        check_consistent(&workers)?;
        let eval = if evaluable {
            let mut m = evaluate(&workers[0].input, &workers[0].output, eval_tokens, cfg.c)?;
            m.step = step;
            m.bytes_total = bytes_total;
            Some(m)
        } else {
            None
        };
        epochs.push(EpochSummary {
            epoch,
            lr,
            steps: steps_per_epoch,
            train_ce: ce_sum / steps_per_epoch as f64,
            eval,
        });
    }

    let trace = group.trace().clone();
    let traffic = TrafficBreakdown::from_trace(&trace);
    let steps = step.max(1) as f64;
    let report = TrainReport {
        master_seed,
        lr_multiplier: cfg.node_multiplier(),
        group_count: plan.group_count,
        train_tokens: train_tokens.len(),
        eval_tokens: eval_tokens.len(),
        steps_per_epoch,
        epochs,
        traffic,
        mean_u_g_input: u_in as f64 / steps,
        mean_u_g_output: u_out as f64 / steps,
        census: (!cfg.compression.is_off()).then_some(census),
        warnings,
    };
    let Worker { input, output } = workers.swap_remove(0);
    Ok(TrainOutcome {
        metrics,
        report,
        input,
        output,
        trace,
    })
}
