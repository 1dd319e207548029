//! Seed derivation and counter-based draws.
//!
//! Every replica gets its own seed `replica_seed(base, index)`, so replicas can
//! run in any order or in parallel and still produce the same numbers. Inside
//! the graph simulator each transmission attempt reads a uniform keyed by
//! `(replica seed, source, target, age)`; two graphs over the same students
//! therefore see the same draw for the same attempt, which is what paired
//! baseline/intervention runs rely on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn combine(acc: u64, word: u64) -> u64 {
    mix64(acc.wrapping_add(GOLDEN) ^ mix64(word))
}

/// Seed for replica `index` of a run seeded with `base`.
pub fn replica_seed(base: u64, index: u64) -> u64 {
    combine(combine(0x5EED_0000_0000_0001, base), index)
}

/// Standard generator for a replica.
pub fn replica_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replica_seed(base, index))
}

/// Stable 64-bit key of a student id (FNV-1a, then mixed).
pub fn id_key(id: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(h)
}

/// Counter-based uniform source for transmission attempts of one replica.
#[derive(Debug, Clone, Copy)]
pub struct EdgeDraws {
    seed: u64,
}

impl EdgeDraws {
    pub fn new(replica_seed: u64) -> Self {
        Self { seed: replica_seed }
    }

    /// Uniform in [0, 1) for the attempt `src -> dst` made when `src` has
    /// been Affected for `age` weeks.
    #[inline]
    pub fn uniform(&self, src_key: u64, dst_key: u64, age: u32) -> f64 {
        let h = combine(combine(combine(self.seed, src_key), dst_key), u64::from(age));
        // top 53 bits
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
