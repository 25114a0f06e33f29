//! Deterministic derivation of per-subsystem seeds from one root seed.

/// Consumers of randomness; each gets an independent seed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Tuning = 3,
    Folds = 4,
    Trial = 5,
    Synthetic = 6,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of `stream` under `root`.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(stream as u64)) ^ index)
}
