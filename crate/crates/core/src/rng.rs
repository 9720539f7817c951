//! Deterministic seed derivation.
//!
//! Every randomized routine in this crate takes either an explicit seed or an
//! `&mut ChaCha8Rng`. Multi-trial drivers derive one independent seed per trial
//! from `(master_seed, trial_index)` with the splitmix64 finalizer, so results
//! are bitwise identical whether trials run sequentially or in parallel, on any
//! platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer: a fixed bijective mixing of 64-bit values.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream seed from a master seed and a stream index.
///
/// Independent of evaluation order: stream `i` gets the same seed whether it is
/// drawn first, last, or concurrently with others.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Derive a seed two levels deep, e.g. `(master, trial, purpose)`.
pub fn derive_seed2(master: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(master, a), b)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
