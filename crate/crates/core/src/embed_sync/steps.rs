//! The local and collective building blocks of the unique-index exchange.

use super::types::{EmbeddingTable, GradientBatch, IndexVector, ScatterMatrix, UniqueIndexVector};
use crate::cluster::Communicator;
use crate::{Error, Result};

/// Bytes per word id on the wire.
pub const INDEX_BYTES: u64 = 4;

/// Gathers table rows for each position; repeated ids give identical rows.
pub fn lookup(table: &EmbeddingTable, j: &IndexVector) -> Result<Vec<f64>> {
    j.check_against(table.vocab_size())?;
    let mut out = Vec::with_capacity(j.len() * table.dim());
    for &id in j.ids() {
        out.extend_from_slice(table.row(id));
    }
    Ok(out)
}

pub fn unique_local(j: &IndexVector) -> UniqueIndexVector {
    unique_sorted(j.ids())
}

fn unique_sorted(ids: &[u32]) -> UniqueIndexVector {
    let mut distinct = ids.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let position_map = ids
        .iter()
        .map(|id| distinct.binary_search(id).expect("id is present") as u32)
        .collect();
    UniqueIndexVector {
        ids: distinct,
        position_map,
    }
}

/// Sums gradient rows that share an id, in ascending position order.
/// Returns a `U_i × D` row-major matrix aligned with `u.ids`.
pub fn reduce_local(delta: &GradientBatch, u: &UniqueIndexVector) -> Result<Vec<f64>> {
    if delta.rows() != u.position_map.len() {
        return Err(Error::Alignment(format!(
            "{} gradient rows for {} positions",
            delta.rows(),
            u.position_map.len()
        )));
    }
    let dim = delta.dim();
    let mut out = vec![0.0; u.len() * dim];
    for (p, &slot) in u.position_map.iter().enumerate() {
        let dst = &mut out[slot as usize * dim..(slot as usize + 1) * dim];
        for (acc, g) in dst.iter_mut().zip(delta.row(p)) {
            *acc += g;
        }
    }
    Ok(out)
}

/// Variable-length AllGather of each rank's unique ids. Returns the per-rank
/// lists in rank order; their concatenation is the global list `I`.
pub fn gather_unique_indices(
    comm: &Communicator<'_>,
    label: &str,
    u_local: &UniqueIndexVector,
) -> Result<Vec<Vec<u32>>> {
    comm.all_gather(label, &u_local.ids, INDEX_BYTES, true)
}

/// Globally unique ids `Î` and, per rank, where each of its local unique ids
/// lands in `Î`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalUnique {
    pub unique: UniqueIndexVector,
    pub worker_maps: Vec<Vec<u32>>,
}

impl GlobalUnique {
    pub fn u_g(&self) -> usize {
        self.unique.len()
    }
}

/// Filters the rank-ordered gathered lists down to sorted distinct ids.
/// `unique.position_map` indexes the concatenated list `I`.
pub fn unique_global(per_rank: &[Vec<u32>]) -> GlobalUnique {
    let concat: Vec<u32> = per_rank.concat();
    let unique = unique_sorted(&concat);
    let mut worker_maps = Vec::with_capacity(per_rank.len());
    let mut offset = 0;
    for list in per_rank {
        worker_maps.push(unique.position_map[offset..offset + list.len()].to_vec());
        offset += list.len();
    }
    GlobalUnique {
        unique,
        worker_maps,
    }
}

/// Places the `U_i × D` reduced rows at their global positions in a zeroed
/// `U_g × D` matrix.
pub fn scatter_expand(reduced: &[f64], dim: usize, local_map: &[u32], u_g: usize) -> Result<ScatterMatrix> {
    if reduced.len() != local_map.len() * dim {
        return Err(Error::Alignment(format!(
            "{} reduced values for {} local ids of width {dim}",
            reduced.len(),
            local_map.len()
        )));
    }
    let mut data = vec![0.0; u_g * dim];
    for (r, &pos) in local_map.iter().enumerate() {
        let pos = pos as usize;
        if pos >= u_g {
            return Err(Error::Alignment(format!("map entry {pos} outside {u_g} global rows")));
        }
        data[pos * dim..(pos + 1) * dim].copy_from_slice(&reduced[r * dim..(r + 1) * dim]);
    }
    Ok(ScatterMatrix { dim, data })
}
