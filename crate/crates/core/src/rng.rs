//! Counter-addressed random streams.
//!
//! Every draw is addressed by `(seed, stream, word offset)` on a ChaCha8
//! keystream, so a value never depends on how many other draws happened
//! before it or on which worker produced it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain separators so that unrelated consumers of one seed never share
/// keystream words.
pub mod domain {
    pub const BROWNIAN: u64 = 0x4252_4f57_4e00_0001;
    pub const BRIDGE: u64 = 0x4252_4944_4745_0002;
    pub const PROPERTY: u64 = 0x5052_4f50_0000_0003;
    pub const ASSUMPTION: u64 = 0x4153_534d_0000_0004;
}

/// Keystream positioned for stream `stream` under `seed` and `domain`.
pub fn keyed(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.rotate_left(17));
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval (0, 1) with 53 bits.
#[inline]
pub fn open01(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Fills `out` with standard normals by Box-Muller. Each pair consumes
/// exactly two `u64` draws (four keystream words), so the word offset of
/// the j-th normal is a fixed function of j.
pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut chunks = out.chunks_mut(2);
    for pair in &mut chunks {
        let u1 = open01(rng);
        let u2 = open01(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        pair[0] = r * theta.cos();
        if pair.len() > 1 {
            pair[1] = r * theta.sin();
        }
    }
}

/// Keystream words consumed when drawing `count` normals.
pub fn normal_words(count: usize) -> u128 {
    (count.div_ceil(2) * 4) as u128
}

/// Uniform point in the axis-aligned cube `center ± half_width`.
pub fn uniform_in_cube(rng: &mut ChaCha8Rng, center: &[f64], half_width: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + half_width * (2.0 * open01(rng) - 1.0))
        .collect()
}
