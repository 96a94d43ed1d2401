//! Random streams and the Gaussian transform used for reward noise.
//!
//! Every run owns a [`RunRng`] (ChaCha8 seeded from a `u64`). Standard normal
//! draws come from [`standard_normal`], a Box-Muller transform that consumes
//! exactly two `u64` words per draw:
//!
//! ```text
//! u1 = ((w1 >> 11) + 1) * 2^-53        in (0, 1]
//! u2 =  (w2 >> 11)      * 2^-53        in [0, 1)
//! z  = sqrt(-2 ln u1) * cos(2 pi u2)
//! ```
//!
//! The sine branch is discarded so that one call always advances the
//! generator by the same amount, whatever the call history.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard normal variate.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let w1 = rng.next_u64();
    let w2 = rng.next_u64();
    let u1 = ((w1 >> 11) + 1) as f64 * TWO_POW_M53;
    let u2 = (w2 >> 11) as f64 * TWO_POW_M53;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replication, independent of execution order.
pub fn derive_seed(base_seed: u64, delta_index: usize, run_index: usize) -> u64 {
    let a = splitmix64(base_seed);
    let b = splitmix64(a ^ delta_index as u64);
    splitmix64(b ^ (run_index as u64).rotate_left(32))
}
