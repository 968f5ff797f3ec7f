//! Seed derivation and the crate's deterministic generator.
//!
//! All randomness flows through [`ChaCha8Rng`] seeded by a 64-bit value.
//! Distinct streams (per dataset copy, per image, per epoch, ...) are derived
//! from one master seed with [`derive_seed`], a splitmix64-style mix. The
//! exact mixing function is an implementation constant of the on-disk
//! formats: changing it changes every generated dataset byte-for-byte.

pub use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// One splitmix64 step: advances and finalizes a 64-bit state.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed from `(master, stream, index)`.
///
/// `stream` separates logical uses (dataset copy j, epoch, split); `index`
/// separates items within a stream (image i, fold f).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

/// Seeded generator for a derived stream.
pub fn stream_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
