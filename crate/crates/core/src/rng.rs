//! Counter-based randomness.
//!
//! Every random quantity in the simulator is a pure function of a key tuple
//! (seed, purpose, index...), so evaluation order never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered list of words into one key.
pub fn key(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Uniform in the open interval (0, 1).
#[inline]
pub fn unit_open(k: u64) -> f64 {
    ((mix64(k) >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard normal draw for a key (Box-Muller on two derived uniforms).
pub fn normal(k: u64) -> f64 {
    let u1 = unit_open(k);
    let u2 = unit_open(k ^ 0xD1B5_4A32_D192_ED03);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A stream generator for bulk draws (noise fields), keyed like the helpers above.
pub fn stream(k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(k))
}

/// Domain-separation tags.
pub mod tag {
    pub const RESP_CYCLE: u64 = 1;
    pub const FRAME_NOISE: u64 = 2;
    pub const CLOCK_JITTER: u64 = 3;
    pub const SYNC_TONE: u64 = 4;
    pub const SYNC_PHASE: u64 = 5;
    pub const MODEL_INIT: u64 = 6;
    pub const PAIRS: u64 = 7;
    pub const MONITOR: u64 = 9;
}
