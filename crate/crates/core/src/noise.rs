//! Counter-based Gaussian noise.
//!
//! Every normal variate is a pure function of `(seed, stream, index)`: the
//! ChaCha8 block counter is positioned at the index and exactly two 64-bit
//! words are consumed per variate (Box–Muller, cosine branch only). This makes
//! replicates independent of thread scheduling and lets coarse and fine paths
//! share the same Brownian motion.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags separating the uses of one seed.
pub mod stream {
    pub const BROWNIAN: u64 = 1;
    pub const LIMIT_WIENER: u64 = 2;
    pub const LIMIT_GAUSS: u64 = 3;
    pub const LIMIT_MIXING: u64 = 4;
}

/// SplitMix64 finaliser.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `index` of an experiment, separated by `tag`.
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    mix(mix(mix(master) ^ index) ^ tag.rotate_left(32))
}

/// Standard normal variates addressed by position.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Variate number `k`, independent of anything drawn before.
    pub fn at(&mut self, k: u64) -> f64 {
        self.rng.set_word_pos(4 * k as u128);
        self.next_normal()
    }

    /// Next variate in sequence (variate `k` follows variate `k - 1`).
    pub fn next_normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    /// Uniform on `[0, 1)` from one 64-bit word; shifts the stream position
    /// by half a variate, so only use it on dedicated streams.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
