//! Deterministic seed derivation.
//!
//! A single master seed fans out to per-stage and per-item seeds through a
//! fixed mixing function, so any stage (or any row of a sharded stage) can be
//! recomputed independently with the same stream. The mix is written out
//! explicitly instead of going through `std::hash` because artifact
//! reproducibility must survive compiler and std upgrades.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a stage seed from the master seed and a stage label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

/// Derive a per-item seed (row, replicate, simulation index) from a stage seed.
pub fn derive_stream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Seeded RNG used everywhere randomness is needed. ChaCha8 keeps streams
/// identical across platforms and library versions.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit content fingerprint, rendered as fixed-width hex.
pub fn fingerprint_hex(bytes: &[u8]) -> String {
    format!("{:016x}", splitmix64(fnv1a(bytes)))
}
