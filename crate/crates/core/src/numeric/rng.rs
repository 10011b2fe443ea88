//! Seedable random source with named substreams.
//!
//! The generator is ChaCha8 keyed by `seed` through `SeedableRng::seed_from_u64`
//! (a PCG32 expansion, fixed by `rand_core`). Substreams share the key and
//! select a ChaCha stream id derived from the consumer name with 64-bit
//! FNV-1a, so the draws of one consumer never depend on what other consumers
//! have drawn.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent source for a named consumer. The result depends only on
    /// the root seed, the parent stream, and `name`, never on how many draws
    /// the parent has made.
    pub fn substream(&self, name: &str) -> Self {
        let mut key = self.stream.to_le_bytes().to_vec();
        key.extend_from_slice(name.as_bytes());
        let stream = fnv1a(&key);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        Self {
            seed: self.seed,
            stream,
            rng,
        }
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in 0..n.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Index drawn with probability proportional to `weights`. Falls back to
    /// the last positive entry when rounding leaves the cursor past the end.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if u < w {
                    return i;
                }
                last_positive = i;
            }
            u -= w;
        }
        last_positive
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
