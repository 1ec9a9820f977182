//! Seed derivation for deterministic, order-independent randomness.
//!
//! Every random decision in the pipeline draws from a [`ChaCha8Rng`] seeded
//! by hashing a global seed together with the identifiers of the decision
//! point. Worker count, scheduling order, and evaluation order therefore
//! cannot change any output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 64-bit seed from a base seed and a list of scope labels.
///
/// The same `(base, parts)` always yields the same seed; any change to a
/// part yields an unrelated seed.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update([0xff]); // separator so ("ab","c") != ("a","bc")
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields >= 8 bytes"))
}

/// A ChaCha RNG seeded via [`derive_seed`].
pub fn rng_for(base: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// A ChaCha RNG seeded directly from a 64-bit seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
