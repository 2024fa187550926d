use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::steps::{
    gather_unique_indices, reduce_local, scatter_expand, unique_global, unique_local, INDEX_BYTES,
};
use super::types::{EmbeddingTable, GradientBatch, IndexVector};
use crate::cluster::{CollectiveRecord, Communicator, WorkerGroup};
use crate::precision::{Compression, FlushCensus};
use crate::{Error, Result};

/// Bytes per uncompressed value element (binary32 wire model).
pub const VALUE_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncPath {
    /// AllGather of every `(id, gradient row)` pair, applied serially.
    Baseline,
    /// Unique-index exchange followed by an AllReduce over `U_g × D`.
    Unique,
}

impl fmt::Display for SyncPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyncPath::Baseline => "baseline",
            SyncPath::Unique => "unique",
        })
    }
}

impl FromStr for SyncPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SyncPath::Baseline),
            "unique" => Ok(SyncPath::Unique),
            other => Err(Error::Config(format!("unknown sync path `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOptions {
    pub lr: f64,
    pub compression: Compression,
    /// Prefix for trace labels; phases are recorded as `<label>/index` and
    /// `<label>/gradient`.
    pub label: String,
}

impl SyncOptions {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            compression: Compression::Off,
            label: "embedding".into(),
        }
    }

    pub fn with_compression(mut self, compression: Compression) -> Self {
        self.compression = compression;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn index_label(&self) -> String {
        format!("{}/index", self.label)
    }

    fn gradient_label(&self) -> String {
        format!("{}/gradient", self.label)
    }

    fn value_bytes(&self) -> u64 {
        self.compression.element_bytes(VALUE_BYTES)
    }
}

/// What one rank observed during a synchronization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkerSync {
    pub u_i: usize,
    pub u_g: usize,
    /// Table rows written in the update step.
    pub touched_rows: usize,
    pub census: FlushCensus,
}

fn check_inputs(table: &EmbeddingTable, j: &IndexVector, delta: &GradientBatch) -> Result<()> {
    j.check_against(table.vocab_size())?;
    delta.check_aligned(j)?;
    if delta.dim() != table.dim() {
        return Err(Error::Alignment(format!(
            "gradient width {} vs table width {}",
            delta.dim(),
            table.dim()
        )));
    }
    Ok(())
}

/// One rank's part of the unique-index exchange: local unique + reduce,
/// gather of unique ids, global unique, scatter, AllReduce, row update.
pub fn sync_unique_worker(
    comm: &Communicator<'_>,
    table: &mut EmbeddingTable,
    j: &IndexVector,
    delta: &GradientBatch,
    opts: &SyncOptions,
) -> Result<WorkerSync> {
    check_inputs(table, j, delta)?;
    let dim = table.dim();
    let local = unique_local(j);
    let reduced = reduce_local(delta, &local)?;

    let lists = gather_unique_indices(comm, &opts.index_label(), &local)?;
    let global = unique_global(&lists);
    let u_g = global.u_g();
    let scattered = scatter_expand(&reduced, dim, &global.worker_maps[comm.rank()], u_g)?;

    let (outgoing, mut census) = opts.compression.roundtrip(&scattered.data)?;
    let summed = comm.all_reduce_sum(&opts.gradient_label(), &outgoing, opts.value_bytes())?;
    // the all-gather half of the ring carries the reduced values in the same encoding
    let (summed, census_out) = opts.compression.roundtrip(&summed)?;
    census += census_out;

    let ids = &global.unique.ids;
    debug_assert!(ids.windows(2).all(|w| w[0] < w[1]), "update rows must be distinct");
    for (r, &id) in ids.iter().enumerate() {
        table.apply_row_update(id, opts.lr, &summed[r * dim..(r + 1) * dim]);
    }
    Ok(WorkerSync {
        u_i: local.len(),
        u_g,
        touched_rows: ids.len(),
        census,
    })
}

/// One rank's part of the dense exchange: AllGather of ids and gradient rows,
/// then every row update applied serially in rank-then-position order.
pub fn sync_baseline_worker(
    comm: &Communicator<'_>,
    table: &mut EmbeddingTable,
    j: &IndexVector,
    delta: &GradientBatch,
    opts: &SyncOptions,
) -> Result<WorkerSync> {
    check_inputs(table, j, delta)?;
    let dim = table.dim();
    let ids = comm.all_gather(&opts.index_label(), j.ids(), INDEX_BYTES, true)?;
    let (outgoing, census) = opts.compression.roundtrip(delta.as_slice())?;
    // lengths are known from the index exchange
    let values = comm.all_gather(&opts.gradient_label(), &outgoing, opts.value_bytes(), false)?;

    let mut applied = 0;
    for (rank_ids, rank_values) in ids.iter().zip(&values) {
        if rank_values.len() != rank_ids.len() * dim {
            return Err(Error::Protocol(format!(
                "gathered {} values for {} ids",
                rank_values.len(),
                rank_ids.len()
            )));
        }
        for (p, &id) in rank_ids.iter().enumerate() {
            table.apply_row_update(id, opts.lr, &rank_values[p * dim..(p + 1) * dim]);
            applied += 1;
        }
    }
    let u_i = unique_local(j).len();
    let u_g = unique_global(&ids).u_g();
    Ok(WorkerSync {
        u_i,
        u_g,
        touched_rows: applied,
        census,
    })
}

pub fn sync_worker(
    path: SyncPath,
    comm: &Communicator<'_>,
    table: &mut EmbeddingTable,
    j: &IndexVector,
    delta: &GradientBatch,
    opts: &SyncOptions,
) -> Result<WorkerSync> {
    match path {
        SyncPath::Baseline => sync_baseline_worker(comm, table, j, delta, opts),
        SyncPath::Unique => sync_unique_worker(comm, table, j, delta, opts),
    }
}

/// Traffic of one exchange phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBytes {
    pub element_bytes: u64,
    pub sent: Vec<u64>,
    pub received: Vec<u64>,
    pub peak_resident: u64,
}

impl PhaseBytes {
    fn from_records<'a>(records: impl Iterator<Item = &'a CollectiveRecord>, g: usize) -> Self {
        let mut out = PhaseBytes {
            sent: vec![0; g],
            received: vec![0; g],
            ..Default::default()
        };
        for r in records {
            out.element_bytes = r.element_bytes;
            for (acc, v) in out.sent.iter_mut().zip(&r.per_worker_sent) {
                *acc += v;
            }
            for (acc, v) in out.received.iter_mut().zip(&r.per_worker_received) {
                *acc += v;
            }
            out.peak_resident = out.peak_resident.max(r.peak_resident);
        }
        out
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn total_received(&self) -> u64 {
        self.received.iter().sum()
    }
}

/// Measured outcome of one synchronization across the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub path: SyncPath,
    pub g: usize,
    pub u_g: usize,
    pub u_i: Vec<usize>,
    pub index_phase: PhaseBytes,
    pub gradient_phase: PhaseBytes,
    pub touched_rows: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub census: Option<FlushCensus>,
}

impl SyncReport {
    /// Builds the report from per-rank outcomes and the trace records of the
    /// run, matched by phase label.
    pub fn from_run(
        path: SyncPath,
        opts: &SyncOptions,
        workers: &[WorkerSync],
        records: &[CollectiveRecord],
    ) -> Self {
        let g = workers.len();
        let index_label = opts.index_label();
        let gradient_label = opts.gradient_label();
        let census = (!opts.compression.is_off()).then(|| {
            let mut c = FlushCensus::default();
            for w in workers {
                c += w.census;
            }
            c
        });
        SyncReport {
            path,
            g,
            u_g: workers.first().map_or(0, |w| w.u_g),
            u_i: workers.iter().map(|w| w.u_i).collect(),
            index_phase: PhaseBytes::from_records(records.iter().filter(|r| r.label == index_label), g),
            gradient_phase: PhaseBytes::from_records(
                records.iter().filter(|r| r.label == gradient_label),
                g,
            ),
            touched_rows: workers.iter().map(|w| w.touched_rows).collect(),
            census,
        }
    }

    pub fn total_sent(&self) -> u64 {
        self.index_phase.total_sent() + self.gradient_phase.total_sent()
    }
}

fn check_consistent(tables: &[EmbeddingTable]) -> Result<()> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Config("no worker tables".into()))?;
    if let Some(r) = tables.iter().position(|t| !t.bit_eq(first)) {
        return Err(Error::Consistency(format!("table on rank {r} differs from rank 0")));
    }
    Ok(())
}

/// Runs one synchronization over the group. `tables`, `js` and `deltas` hold
/// one entry per rank; tables must be identical on entry and are identical
/// on exit.
pub fn sync(
    path: SyncPath,
    group: &mut WorkerGroup,
    tables: &mut [EmbeddingTable],
    js: &[IndexVector],
    deltas: &[GradientBatch],
    opts: &SyncOptions,
) -> Result<SyncReport> {
    let g = group.size();
    if tables.len() != g || js.len() != g || deltas.len() != g {
        return Err(Error::Config(format!(
            "need {g} tables, index vectors and gradient batches; got {}, {}, {}",
            tables.len(),
            js.len(),
            deltas.len()
        )));
    }
    check_consistent(tables)?;
    let trace_start = group.trace().len();
    let states: Vec<_> = tables.iter_mut().zip(js).zip(deltas).collect();
    let workers = group.run_lockstep(states, |comm, ((table, j), delta)| {
        sync_worker(path, comm, table, j, delta, opts)
    })?;
    check_consistent(tables)?;
    Ok(SyncReport::from_run(path, opts, &workers, group.trace().since(trace_start)))
}

pub fn sync_unique(
    group: &mut WorkerGroup,
    tables: &mut [EmbeddingTable],
    js: &[IndexVector],
    deltas: &[GradientBatch],
    opts: &SyncOptions,
) -> Result<SyncReport> {
    sync(SyncPath::Unique, group, tables, js, deltas, opts)
}

pub fn sync_baseline(
    group: &mut WorkerGroup,
    tables: &mut [EmbeddingTable],
    js: &[IndexVector],
    deltas: &[GradientBatch],
    opts: &SyncOptions,
) -> Result<SyncReport> {
    sync(SyncPath::Baseline, group, tables, js, deltas, opts)
}
