//! Deterministic seed derivation.
//!
//! Sweeps derive one seed per grid point from the master seed with a
//! counter-based scheme (splitmix64 of `master XOR (index+1)*GOLDEN`), so
//! results are independent of execution order and thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sweep point `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master ^ GOLDEN.wrapping_mul(index.wrapping_add(1)))
}

/// Platform-independent RNG stream for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
