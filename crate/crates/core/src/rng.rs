//! Counter-based random streams.
//!
//! Every scenario draws from its own ChaCha8 stream addressed by
//! `(seed, purpose, index)`. The stream for a given address never depends on
//! how work is split across threads, so results are reproducible for any
//! worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Addresses a family of streams. Two keys with different purposes never
/// share streams even with the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: u64, purpose: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((purpose.len() as u64).to_le_bytes());
        h.update(purpose.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    /// Derive a child key, e.g. one per CE iteration.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    /// The stream for scenario `index`.
    pub fn stream(&self, index: u64) -> UniformStream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        UniformStream { rng }
    }
}

/// Source of uniforms strictly inside (0, 1).
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn open01(&mut self) -> f64 {
        // 53-bit grid shifted by half a step: never 0, never 1.
        let bits = self.rng.random::<u64>() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}
