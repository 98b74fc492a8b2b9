//! Deterministic randomness.
//!
//! Every random draw in the crate comes from a [`SeededRng`], which wraps
//! ChaCha20 (`rand_chacha` 0.9, 20 rounds) keyed by `seed_from_u64`.
//! Substreams are derived by hashing the parent seed together with a label
//! through SplitMix64, so a Monte-Carlo partition or a simulated worker can
//! own an independent stream that does not depend on scheduling order.
//!
//! Gaussian draws use the ziggurat sampler of `rand_distr` 0.5
//! (`StandardNormal`). The stream is identical across platforms for a fixed
//! crate version.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Version tag of the generator construction, recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9+splitmix64-substreams/v1";

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `label`. Depends only on the
    /// parent seed, never on how much of the parent stream was consumed.
    pub fn substream(&self, label: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, label))
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

/// Seed of the substream `label` of a stream seeded with `seed`.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
