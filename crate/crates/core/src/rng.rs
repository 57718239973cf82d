//! Seed derivation.
//!
//! Sequential randomness (sampling, exploration, replay) uses ChaCha8 seeded
//! from a `u64`. Diffusion simulations use [`RunStream`], a counter-based
//! stream: the uniform attached to arc `a` in run `r` is a pure function of
//! `(seed, r, a)`. Two simulations sharing a run stream therefore see the same
//! live-edge world and the same thresholds, whatever order they visit nodes in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the named substream (`"sample/0"`, `"train"`, ...) of a global seed.
pub fn substream_seed(global: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// splitmix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunStream {
    key: u64,
}

impl RunStream {
    pub fn new(seed: u64, run: u64) -> Self {
        RunStream {
            key: mix64(mix64(seed ^ GOLDEN) ^ run.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019)),
        }
    }

    /// Uniform in `[0, 1)` attached to `index`.
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        let bits = mix64(self.key ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(1)));
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ_by_name() {
        assert_ne!(substream_seed(1, "train"), substream_seed(1, "sample/0"));
        assert_eq!(substream_seed(7, "eval/run3"), substream_seed(7, "eval/run3"));
    }

    #[test]
    fn run_stream_uniform_moments() {
        let s = RunStream::new(42, 3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|i| s.uniform(i)).collect();
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
        // neighbouring indices and runs are not correlated
        let t = RunStream::new(42, 4);
        let cov = (0..n)
            .map(|i| (s.uniform(i) - 0.5) * (t.uniform(i) - 0.5))
            .sum::<f64>()
            / n as f64;
        assert!(cov.abs() < 0.002, "cov {cov}");
    }
}
