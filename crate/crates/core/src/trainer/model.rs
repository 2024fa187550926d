//! Mean-pooled context predictor: `h = mean(E_in[x])`, `o_w = E_out[w]·h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed_sync::{EmbeddingTable, GradientBatch, IndexVector};
use crate::sampling::{sampled_softmax_loss, softmax_probs};
use crate::{seed, Error, Result};

/// Uniform `[-scale, scale)` entries from a labeled stream.
pub fn init_table(vocab_size: usize, dim: usize, scale: f64, master_seed: u64, label: &str) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, label));
    let data = (0..vocab_size * dim)
        .map(|_| if scale == 0.0 { 0.0 } else { rng.gen_range(-scale..scale) })
        .collect();
    EmbeddingTable::from_rows(vocab_size, dim, data).expect("shape matches")
}

pub fn mean_embedding(table: &EmbeddingTable, context: &[u32]) -> Vec<f64> {
    let mut h = vec![0.0; table.dim()];
    for &id in context {
        for (acc, v) in h.iter_mut().zip(table.row(id)) {
            *acc += v;
        }
    }
    let inv = 1.0 / context.len() as f64;
    h.iter_mut().for_each(|x| *x *= inv);
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of one worker's mean loss over its contexts.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub loss_sum: f64,
    pub contexts: usize,
    /// One row per context token, in stream order.
    pub input_ids: IndexVector,
    pub input_grad: GradientBatch,
    /// One row per candidate, aligned with the sorted candidate ids.
    pub output_ids: IndexVector,
    pub output_grad: GradientBatch,
}

/// Forward and backward pass over the contexts `tokens[j·c .. (j+1)·c]`,
/// each predicting `tokens[(j+1)·c]`.
/// `log_q` is subtracted from the candidate scores when present.
pub fn step_gradients(
    input: &EmbeddingTable,
    output: &EmbeddingTable,
    tokens: &[u32],
    c: usize,
    candidates: &[u32],
    log_q: Option<&[f64]>,
) -> Result<StepGradients> {
    let dim = input.dim();
    let contexts = (tokens.len() - 1) / c;
    let inv = 1.0 / contexts as f64;
    let mut input_grad = vec![0.0; contexts * c * dim];
    let mut output_grad = vec![0.0; candidates.len() * dim];
    let mut scores = vec![0.0; candidates.len()];
    let mut loss_sum = 0.0;
    for j in 0..contexts {
        let ctx = &tokens[j * c..(j + 1) * c];
        let target = tokens[(j + 1) * c];
        let pos = candidates
            .binary_search(&target)
            .map_err(|_| Error::Contract(format!("target {target} missing from candidates")))?;
        let h = mean_embedding(input, ctx);
        for (s, &w) in scores.iter_mut().zip(candidates) {
            *s = dot(output.row(w), &h);
        }
        if let Some(lq) = log_q {
            scores.iter_mut().zip(lq).for_each(|(s, q)| *s -= q);
        }
        let (loss, dscore) = sampled_softmax_loss(&scores, pos)?;
        loss_sum += loss;

        let mut dh = vec![0.0; dim];
        for (i, (&w, &ds)) in candidates.iter().zip(&dscore).enumerate() {
            let row = &mut output_grad[i * dim..(i + 1) * dim];
            for ((g, hv), (acc, ov)) in row.iter_mut().zip(&h).zip(dh.iter_mut().zip(output.row(w))) {
                *g += ds * hv * inv;
                *acc += ds * ov;
            }
        }
        let share = inv / c as f64;
        for p in 0..c {
            let row = &mut input_grad[(j * c + p) * dim..(j * c + p + 1) * dim];
            row.iter_mut().zip(&dh).for_each(|(g, v)| *g = v * share);
        }
    }
    Ok(StepGradients {
        loss_sum,
        contexts,
        input_ids: IndexVector::new(tokens[..contexts * c].to_vec())?,
        input_grad: GradientBatch::new(dim, input_grad)?,
        output_ids: IndexVector::new(candidates.to_vec())?,
        output_grad: GradientBatch::new(dim, output_grad)?,
    })
}

/// One row of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean cross-entropy in nats.
    pub ce: f64,
    pub ppl: f64,
    pub bpc: f64,
    pub bytes_total: u64,
}

impl MetricsRecord {
    pub fn from_ce(step: u64, ce: f64, bytes_total: u64) -> Self {
        Self {
            step,
            ce,
            ppl: ce.exp(),
            bpc: ce / std::f64::consts::LN_2,
            bytes_total,
        }
    }

    pub const CSV_HEADER: &'static str = "step,ce,ppl,bpc,bytes_total";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.ce, self.ppl, self.bpc, self.bytes_total)
    }
}

/// Full-softmax cross-entropy over non-overlapping windows of `slice`.
pub fn evaluate(input: &EmbeddingTable, output: &EmbeddingTable, slice: &[u32], c: usize) -> Result<MetricsRecord> {
    if slice.len() <= c {
        return Err(Error::Range(format!(
            "evaluation needs more than {c} tokens, got {}",
            slice.len()
        )));
    }
    let vocab = output.vocab_size();
    let contexts = (slice.len() - 1) / c;
    let mut scores = vec![0.0; vocab];
    let mut total = 0.0;
    for j in 0..contexts {
        let h = mean_embedding(input, &slice[j * c..(j + 1) * c]);
        for (w, s) in scores.iter_mut().enumerate() {
            *s = dot(output.row(w as u32), &h);
        }
        let target = slice[(j + 1) * c];
        output.check_id(target)?;
        let p = softmax_probs(&scores)?;
        total -= p[target as usize].ln();
    }
    Ok(MetricsRecord::from_ce(0, total / contexts as f64, 0))
}

/// Text compression implied by a bits-per-character score.
pub fn compression_ratio(corpus_bytes: f64, num_chars: f64, bpc: f64) -> f64 {
    corpus_bytes * 8.0 / (bpc * num_chars)
}
