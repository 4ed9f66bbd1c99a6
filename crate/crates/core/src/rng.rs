//! Deterministic random streams.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`], a
//! counter-based generator whose output is identical on every platform.
//! A stream is addressed by a `(seed, stream)` pair: the seed is expanded
//! into the 256-bit ChaCha key and the stream index selects one of 2^64
//! independent nonces. Tree `i` of a forest trained with seed `s` uses
//! stream `i` of key `s`, so trees can be fitted in any order or in
//! parallel without changing the result.
//!
//! Seeds for nested experiments (repetition `r` of experiment `s`) come
//! from [`derive_seed`], a SplitMix64 finalizer over the pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a child index into a new, well-separated seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Uniform index in `0..bound`, drawn through `u64` so the result does not
/// depend on the platform's pointer width.
pub(crate) fn index_below<R: Rng + ?Sized>(rng: &mut R, bound: usize) -> usize {
    debug_assert!(bound > 0);
    rng.random_range(0..bound as u64) as usize
}

/// In-place Fisher-Yates shuffle using [`index_below`].
pub(crate) fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}
