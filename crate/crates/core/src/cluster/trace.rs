use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width of the length word exchanged ahead of a variable-length AllGather.
pub const LENGTH_PREFIX_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectiveKind {
    AllGather,
    AllReduce,
}

/// Byte accounting for one collective invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectiveRecord {
    pub seq: u64,
    pub kind: CollectiveKind,
    pub label: String,
    pub tag: u64,
    pub element_bytes: u64,
    pub variable_length: bool,
    /// Elements contributed by each rank.
    pub elements: Vec<u64>,
    pub per_worker_sent: Vec<u64>,
    pub per_worker_received: Vec<u64>,
    pub peak_resident: u64,
}

fn mul(a: u64, b: u64, what: &str) -> Result<u64> {
    a.checked_mul(b).ok_or_else(|| Error::Accounting(what.to_string()))
}

fn add(a: u64, b: u64, what: &str) -> Result<u64> {
    a.checked_add(b).ok_or_else(|| Error::Accounting(what.to_string()))
}

/// Sent, received and peak-resident bytes for an AllGather in which every
/// rank ends up holding every buffer.
pub fn all_gather_bytes(
    elements: &[u64],
    element_bytes: u64,
    variable_length: bool,
) -> Result<(Vec<u64>, Vec<u64>, u64)> {
    let g = elements.len() as u64;
    let sizes = elements
        .iter()
        .map(|&n| mul(n, element_bytes, "all_gather buffer size"))
        .collect::<Result<Vec<_>>>()?;
    let total = sizes
        .iter()
        .try_fold(0u64, |acc, &s| add(acc, s, "all_gather total"))?;
    let prefix = if variable_length { LENGTH_PREFIX_BYTES } else { 0 };
    let peers = g.saturating_sub(1);
    let mut sent = Vec::with_capacity(sizes.len());
    let mut received = Vec::with_capacity(sizes.len());
    for &own in &sizes {
        sent.push(mul(peers, add(own, prefix, "all_gather sent")?, "all_gather sent")?);
        let others = total - own;
        received.push(add(others, mul(peers, prefix, "all_gather prefix")?, "all_gather received")?);
    }
    let peak = add(total, mul(g, prefix, "all_gather prefix")?, "all_gather peak")?;
    Ok((sent, received, peak))
}

/// Ring AllReduce of `n` elements over `g` ranks: the buffer is cut into `g`
/// segments of `ceil(n / g)` elements (last one zero-padded) and each rank
/// sends and receives `2(g - 1)` segments. Peak residency is the buffer plus
/// one receive segment.
pub fn ring_all_reduce_bytes(g: u64, n: u64, element_bytes: u64) -> Result<(u64, u64, u64)> {
    let buffer = mul(n, element_bytes, "all_reduce buffer")?;
    if g <= 1 {
        return Ok((0, 0, buffer));
    }
    let segment = mul(n.div_ceil(g), element_bytes, "all_reduce segment")?;
    let moved = mul(mul(2, g - 1, "all_reduce hops")?, segment, "all_reduce traffic")?;
    Ok((moved, moved, add(buffer, segment, "all_reduce peak")?))
}

/// Ordered log of collective invocations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectiveTrace {
    pub records: Vec<CollectiveRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub invocations: u64,
    pub per_worker_sent: Vec<u64>,
    pub per_worker_received: Vec<u64>,
    pub total_sent: u64,
    pub max_peak_resident: u64,
}

impl CollectiveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records appended at or after position `from`.
    pub fn since(&self, from: usize) -> &[CollectiveRecord] {
        &self.records[from.min(self.records.len())..]
    }

    pub fn summarize(records: &[CollectiveRecord]) -> TraceSummary {
        let g = records.iter().map(|r| r.per_worker_sent.len()).max().unwrap_or(0);
        let mut s = TraceSummary {
            invocations: records.len() as u64,
            per_worker_sent: vec![0; g],
            per_worker_received: vec![0; g],
            ..Default::default()
        };
        for r in records {
            for (acc, v) in s.per_worker_sent.iter_mut().zip(&r.per_worker_sent) {
                *acc += v;
            }
            for (acc, v) in s.per_worker_received.iter_mut().zip(&r.per_worker_received) {
                *acc += v;
            }
            s.max_peak_resident = s.max_peak_resident.max(r.peak_resident);
        }
        s.total_sent = s.per_worker_sent.iter().sum();
        s
    }

    pub fn summary(&self) -> TraceSummary {
        Self::summarize(&self.records)
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_fixed() {
        let (sent, recv, peak) = all_gather_bytes(&[8, 8, 8, 8], 1, false).unwrap();
        assert_eq!(sent, vec![24; 4]);
        assert_eq!(recv, vec![24; 4]);
        assert_eq!(peak, 32);
    }

    #[test]
    fn gather_single_rank() {
        let (sent, recv, peak) = all_gather_bytes(&[5], 4, true).unwrap();
        assert_eq!((sent, recv, peak), (vec![0], vec![0], 24));
    }

    #[test]
    fn gather_variable() {
        let (sent, recv, peak) = all_gather_bytes(&[4, 0, 12], 1, true).unwrap();
        assert_eq!(sent, vec![2 * 8, 2 * 4, 2 * 16]);
        assert_eq!(recv, vec![12 + 8, 16 + 8, 4 + 8]);
        assert_eq!(peak, 16 + 12);
    }

    #[test]
    fn ring_example() {
        assert_eq!(ring_all_reduce_bytes(3, 300, 4).unwrap(), (1600, 1600, 1200 + 400));
        assert_eq!(ring_all_reduce_bytes(1, 300, 4).unwrap(), (0, 0, 1200));
        // 10 elements over 4 ranks: segments of 3
        assert_eq!(ring_all_reduce_bytes(4, 10, 2).unwrap(), (36, 36, 26));
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(
            ring_all_reduce_bytes(4, u64::MAX / 2, 8),
            Err(Error::Accounting(_))
        ));
        assert!(matches!(
            all_gather_bytes(&[u64::MAX, 1], 1, false),
            Err(Error::Accounting(_))
        ));
    }
}
