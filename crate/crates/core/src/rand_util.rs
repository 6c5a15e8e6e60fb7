//! Deterministic draw helpers on top of ChaCha20. Distribution code is
//! hand-rolled from `next_u64` so that synthesized datasets and initial
//! weights are reproducible bit-for-bit across platforms and crate
//! upgrades — the stream depends only on the documented generator.

use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

/// Uniform in [0, 1) with 53 random mantissa bits.
pub(crate) fn uniform_01(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [lo, hi).
pub(crate) fn uniform_in(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_01(rng)
}

/// Uniform index in [0, n).
pub(crate) fn uniform_index(rng: &mut ChaCha20Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    // The bias of the simple product method is < 2^-53 per draw; the index
    // spaces here are tiny (file pools, segment starts).
    ((uniform_01(rng) * n as f64) as usize).min(n - 1)
}

/// In-place Fisher–Yates shuffle.
pub(crate) fn shuffle<T>(rng: &mut ChaCha20Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Standard normal via Box–Muller (one draw per call; the partner
/// variate is discarded to keep the draw count per sample fixed).
pub(crate) fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = uniform_01(rng).max(f64::MIN_POSITIVE);
    let u2 = uniform_01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
