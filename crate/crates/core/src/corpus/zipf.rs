use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::TokenStream;
use crate::{Error, Result};

/// Inverse-CDF sampler over ranks `1..=vocab_size` with `P(r) ∝ r^-s`.
/// Rank `r` is emitted as id `r - 1`.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(vocab_size: usize, exponent: f64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("zipf vocabulary must be non-empty".into()));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::Config(format!("zipf exponent must be positive, got {exponent}")));
        }
        let weights: Vec<f64> = (1..=vocab_size).map(|r| (r as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        // guard the top end against accumulated rounding
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { cdf })
    }

    pub fn vocab_size(&self) -> usize {
        self.cdf.len()
    }

    /// Probability of id `id` (rank `id + 1`).
    pub fn pmf(&self, id: usize) -> f64 {
        match id {
            0 => self.cdf[0],
            i => self.cdf[i] - self.cdf[i - 1],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u32
    }

    pub fn stream<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<u32> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Draws `n` i.i.d. Zipf ids; identical for identical arguments.
pub fn sample_zipf(vocab_size: usize, exponent: f64, n: usize, seed: u64) -> Result<TokenStream> {
    let sampler = ZipfSampler::new(vocab_size, exponent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(TokenStream {
        ids: sampler.stream(&mut rng, n),
        source_bytes: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_word_vocabulary() {
        assert_eq!(sample_zipf(1, 1.3, 5, 9).unwrap().ids, vec![0; 5]);
    }

    #[test]
    fn reproducible() {
        let a = sample_zipf(100, 1.1, 1000, 42).unwrap();
        let b = sample_zipf(100, 1.1, 1000, 42).unwrap();
        let c = sample_zipf(100, 1.1, 1000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.ids.iter().all(|&id| id < 100));
    }

    #[test]
    fn pmf_matches_harmonic_weights() {
        let z = ZipfSampler::new(4, 1.0).unwrap();
        let h = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        for r in 1..=4 {
            assert!((z.pmf(r - 1) - 1.0 / (r as f64 * h)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ZipfSampler::new(0, 1.0).is_err());
        assert!(ZipfSampler::new(10, 0.0).is_err());
        assert!(ZipfSampler::new(10, f64::NAN).is_err());
    }
}
