use serde::{Deserialize, Serialize};

use super::vocab::TokenStream;
use crate::{Error, Result};

/// Distinct-type counts `u` after the first `n` tokens of a stream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeTokenCurve {
    pub points: Vec<(u64, u64)>,
}

impl TypeTokenCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,u\n");
        for (n, u) in &self.points {
            out.push_str(&format!("{n},{u}\n"));
        }
        out
    }
}

/// One pass over the stream with a presence table; `checkpoints` must be
/// strictly increasing and within the stream.
pub fn type_token_curve(stream: &TokenStream, checkpoints: &[u64]) -> Result<TypeTokenCurve> {
    let len = stream.len() as u64;
    for w in checkpoints.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Range(format!(
                "checkpoints must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = checkpoints.last() {
        if last > len {
            return Err(Error::Range(format!(
                "checkpoint {last} beyond stream of {len} tokens"
            )));
        }
    }
    let table_len = stream.ids.iter().max().map_or(0, |&m| m as usize + 1);
    let mut seen = vec![false; table_len];
    let mut distinct = 0u64;
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut consumed = 0u64;
    for &cp in checkpoints {
        while consumed < cp {
            let slot = &mut seen[stream.ids[consumed as usize] as usize];
            if !*slot {
                *slot = true;
                distinct += 1;
            }
            consumed += 1;
        }
        points.push((cp, distinct));
    }
    Ok(TypeTokenCurve { points })
}

/// Roughly `per_decade` log-spaced checkpoints in `1..=n`, always ending at `n`.
pub fn log_checkpoints(n: u64, per_decade: u32) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let per_decade = per_decade.max(1) as f64;
    let steps = ((n as f64).log10() * per_decade).ceil() as u32;
    let mut out: Vec<u64> = (0..=steps)
        .map(|i| (10f64.powf(i as f64 / per_decade)).round() as u64)
        .filter(|&c| c >= 1 && c <= n)
        .collect();
    out.push(n);
    out.dedup();
    out
}

/// `u ≈ coeff · n^alpha`, fitted by unweighted least squares on `(ln n, ln u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub coeff: f64,
    pub r_squared: f64,
}

impl PowerLawFit {
    pub fn from_curve(curve: &TypeTokenCurve) -> Result<Self> {
        Self::from_points(curve.points.iter().map(|&(n, u)| (n as f64, u as f64)))
    }

    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (n, u) in points {
            if !(n >= 1.0 && u >= 1.0 && n.is_finite() && u.is_finite()) {
                return Err(Error::Fit(format!("point ({n}, {u}) needs n >= 1 and u >= 1")));
            }
            xs.push(n.ln());
            ys.push(u.ln());
        }
        if xs.len() < 2 {
            return Err(Error::Fit(format!("need at least 2 points, got {}", xs.len())));
        }
        let m = xs.len() as f64;
        let mean_x = xs.iter().sum::<f64>() / m;
        let mean_y = ys.iter().sum::<f64>() / m;
        let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::Fit("all points share the same n".into()));
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
        let alpha = sxy / sxx;
        let intercept = mean_y - alpha * mean_x;
        let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - (intercept + alpha * x)).powi(2))
            .sum();
        let r_squared = if ss_tot == 0.0 {
            1.0
        } else {
            (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
        };
        Ok(PowerLawFit {
            alpha,
            coeff: intercept.exp(),
            r_squared,
        })
    }
}
