//! Seeded random streams. All randomness in a run flows from one `u64` seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the engine.
pub type HpoRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> HpoRng {
    HpoRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable (platform- and version-independent) hash of a word sequence.
pub fn hash_words<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    words
        .into_iter()
        .fold(0x6a09_e667_f3bc_c909, |acc, w| mix64(acc ^ mix64(w)))
}

/// Child seed for stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    hash_words([base, stream])
}
