//! Stable, platform-independent seed derivation.
//!
//! Every random choice in the crate (label masking, random demonstration
//! selection, k-means initialisation, mock-oracle noise, per-repeat seeds)
//! is keyed through [`SeedKey`], so results never depend on `std`'s
//! randomized hasher or on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Incrementally built hash key. Each component is length-prefixed so that
/// `("ab", "c")` and `("a", "bc")` never collide.
#[derive(Clone)]
pub struct SeedKey {
    hasher: Sha256,
}

impl SeedKey {
    pub fn new(domain: &str) -> Self {
        let mut key = Self {
            hasher: Sha256::new(),
        };
        key.push_str(domain);
        key
    }

    pub fn push_u64(&mut self, value: u64) -> &mut Self {
        self.hasher.update([0u8]);
        self.hasher.update(value.to_le_bytes());
        self
    }

    pub fn push_str(&mut self, value: &str) -> &mut Self {
        self.hasher.update([1u8]);
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value.as_bytes());
        self
    }

    pub fn with_u64(mut self, value: u64) -> Self {
        self.push_u64(value);
        self
    }

    pub fn with_str(mut self, value: &str) -> Self {
        self.push_str(value);
        self
    }

    pub fn finish(&self) -> u64 {
        let digest = self.hasher.clone().finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit(&self) -> f64 {
        (self.finish() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

/// Seed for one repeat of an experiment, derived from the master seed.
pub fn repeat_seed(master_seed: u64, repeat: usize) -> u64 {
    SeedKey::new("repeat")
        .with_u64(master_seed)
        .with_u64(repeat as u64)
        .finish()
}
