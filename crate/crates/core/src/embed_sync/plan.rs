use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed-form per-worker memory / traffic estimate for one exchange,
/// assuming the number of distinct ids grows as `(g·k)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityPlan {
    pub g: u64,
    pub k: u64,
    pub d: u64,
    pub alpha: f64,
    pub element_bytes: u64,
    pub index_bytes: u64,
    pub baseline_bytes: f64,
    pub unique_index_bytes: f64,
    pub unique_grad_bytes: f64,
    pub u_g_estimate: f64,
    pub saving_factor: f64,
}

pub fn complexity_plan(
    g: u64,
    k: u64,
    d: u64,
    alpha: f64,
    element_bytes: u64,
    index_bytes: u64,
) -> Result<ComplexityPlan> {
    if g == 0 || k == 0 || d == 0 || element_bytes == 0 || index_bytes == 0 {
        return Err(Error::Config("plan sizes must all be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let tokens = g as f64 * k as f64;
    let baseline_bytes = tokens * d as f64 * element_bytes as f64;
    let u_g_estimate = tokens.powf(alpha);
    let unique_grad_bytes = u_g_estimate * d as f64 * element_bytes as f64;
    let unique_index_bytes = tokens * index_bytes as f64;
    Ok(ComplexityPlan {
        g,
        k,
        d,
        alpha,
        element_bytes,
        index_bytes,
        baseline_bytes,
        unique_index_bytes,
        unique_grad_bytes,
        u_g_estimate,
        saving_factor: baseline_bytes / (unique_index_bytes + unique_grad_bytes),
    })
}

impl ComplexityPlan {
    pub fn to_table(&self) -> String {
        let gb = |b: f64| b / 1e9;
        let mut out = String::new();
        let _ = writeln!(out, "workers (g)            {}", self.g);
        let _ = writeln!(out, "tokens per worker (k)  {}", self.k);
        let _ = writeln!(out, "embedding dim (d)      {}", self.d);
        let _ = writeln!(out, "alpha                  {}", self.alpha);
        let _ = writeln!(out, "estimated U_g          {:.1}", self.u_g_estimate);
        let _ = writeln!(out, "baseline               {:.4} GB", gb(self.baseline_bytes));
        let _ = writeln!(out, "unique: indices        {:.4} GB", gb(self.unique_index_bytes));
        let _ = writeln!(out, "unique: gradients      {:.4} GB", gb(self.unique_grad_bytes));
        let _ = writeln!(out, "saving factor          {:.1}x", self.saving_factor);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_configuration() {
        let p = complexity_plan(256, 19200, 1792, 0.64, 4, 4).unwrap();
        assert!((p.baseline_bytes / 1e9 - 35.2).abs() / 35.2 < 0.01);
        assert!((p.unique_grad_bytes / 1e9 - 0.137).abs() / 0.137 < 0.02);
        assert!(p.saving_factor >= 200.0);
    }

    #[test]
    fn single_token() {
        let p = complexity_plan(1, 1, 8, 0.5, 4, 4).unwrap();
        assert_eq!(p.u_g_estimate, 1.0);
        let expected = 8.0 / (4.0 / 4.0 + 8.0);
        assert!((p.saving_factor - expected).abs() < 1e-12);
    }

    #[test]
    fn independent_recomputation() {
        // written out term by term
        let (g, k, d, a) = (16.0f64, 512.0f64, 512.0f64, 0.64f64);
        let ug = (g * k).powf(a);
        let base = g * k * d * 4.0;
        let idx = g * k * 4.0;
        let grad = ug * d * 4.0;
        let p = complexity_plan(16, 512, 512, 0.64, 4, 4).unwrap();
        for (got, want) in [
            (p.baseline_bytes, base),
            (p.unique_index_bytes, idx),
            (p.unique_grad_bytes, grad),
            (p.u_g_estimate, ug),
            (p.saving_factor, base / (idx + grad)),
        ] {
            assert!(((got - want) / want).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(complexity_plan(1, 1, 1, 0.0, 4, 4).is_err());
        assert!(complexity_plan(1, 1, 1, 1.5, 4, 4).is_err());
        assert!(complexity_plan(0, 1, 1, 0.5, 4, 4).is_err());
    }
}
