//! Scaled binary16 payload codec: multiply by `F`, round to IEEE-754 half
//! precision (nearest-even, saturating at ±65504), and undo both on receipt.

use std::fmt;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest finite binary16 value.
pub const F16_MAX: f32 = 65504.0;
/// Bytes per encoded element.
pub const F16_BYTES: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledHalfBuffer {
    payload: Vec<u16>,
    scale: f32,
}

impl ScaledHalfBuffer {
    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn byte_len(&self) -> u64 {
        self.payload.len() as u64 * F16_BYTES
    }

    /// Raw binary16 bit patterns.
    pub fn payload_bits(&self) -> &[u16] {
        &self.payload
    }

    pub fn payload_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.payload.iter().map(|&b| f16::from_bits(b).to_f32())
    }
}

fn check_scale(f: f32) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Codec(format!("scale must be positive and finite, got {f}")))
    }
}

fn encode_one(v: f32, f: f32) -> u16 {
    let scaled = v * f;
    if scaled.abs() > F16_MAX {
        f16::from_f32(F16_MAX.copysign(scaled)).to_bits()
    } else {
        f16::from_f32(scaled).to_bits()
    }
}

pub fn compress(values: &[f32], f: f32) -> Result<ScaledHalfBuffer> {
    check_scale(f)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Codec(format!("non-finite value at index {i}")));
    }
    Ok(ScaledHalfBuffer {
        payload: values.iter().map(|&v| encode_one(v, f)).collect(),
        scale: f,
    })
}

pub fn decompress(buf: &ScaledHalfBuffer) -> Vec<f32> {
    buf.payload_values().map(|v| v / buf.scale).collect()
}

/// How many elements a compression would zero out or clip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushCensus {
    pub flushed_to_zero: u64,
    pub saturated: u64,
}

impl std::ops::AddAssign for FlushCensus {
    fn add_assign(&mut self, rhs: Self) {
        self.flushed_to_zero += rhs.flushed_to_zero;
        self.saturated += rhs.saturated;
    }
}

pub fn flush_census(values: &[f32], f: f32) -> Result<FlushCensus> {
    let buf = compress(values, f)?;
    let mut census = FlushCensus::default();
    for (&v, h) in values.iter().zip(buf.payload_values()) {
        if v != 0.0 && h == 0.0 {
            census.flushed_to_zero += 1;
        }
        if (v * f).abs() > F16_MAX {
            census.saturated += 1;
        }
    }
    Ok(census)
}

/// Payload compression setting, written `off` or `fp16:<F>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Compression {
    #[default]
    Off,
    Fp16 { scale: f32 },
}

impl Compression {
    pub fn fp16(scale: f32) -> Result<Self> {
        check_scale(scale)?;
        Ok(Compression::Fp16 { scale })
    }

    pub fn is_off(&self) -> bool {
        matches!(self, Compression::Off)
    }

    /// Bytes per value element on the wire.
    pub fn element_bytes(&self, uncompressed: u64) -> u64 {
        match self {
            Compression::Off => uncompressed,
            Compression::Fp16 { .. } => F16_BYTES,
        }
    }

    /// Applies compress then decompress to wide values, as a receiver would
    /// see them. Values pass through binary32 first. `Off` is the identity.
    pub fn roundtrip(&self, values: &[f64]) -> Result<(Vec<f64>, FlushCensus)> {
        match *self {
            Compression::Off => Ok((values.to_vec(), FlushCensus::default())),
            Compression::Fp16 { scale } => {
                let narrow: Vec<f32> = values.iter().map(|&v| v as f32).collect();
                let census = flush_census(&narrow, scale)?;
                let back = decompress(&compress(&narrow, scale)?);
                Ok((back.into_iter().map(f64::from).collect(), census))
            }
        }
    }
}

impl fmt::Display for Compression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compression::Off => f.write_str("off"),
            Compression::Fp16 { scale } => write!(f, "fp16:{scale}"),
        }
    }
}

impl FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "off" {
            return Ok(Compression::Off);
        }
        let scale = s
            .strip_prefix("fp16:")
            .and_then(|f| f.parse::<f32>().ok())
            .ok_or_else(|| Error::Config(format!("compression must be `off` or `fp16:<F>`, got `{s}`")))?;
        Compression::fp16(scale).map_err(|e| Error::Config(e.to_string()))
    }
}
