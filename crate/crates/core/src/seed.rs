//! Seed derivation for independent deterministic RNG streams.
//!
//! Every randomized stage of the pipeline takes one global `u64` seed and
//! derives a child seed per work unit (corpus chunk, training step, decode
//! call) with [`derive`]. Child streams are therefore stable under
//! reordering, resumption, and parallel scheduling: chunk 17 always sees the
//! same randomness no matter how many chunks were processed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a 64-bit value through the splitmix64 finalizer.
///
/// This is the standard avalanching permutation used to decorrelate
/// sequential seed inputs; nearby `(seed, index)` pairs map to unrelated
/// outputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the child seed for work unit `index` under `global_seed`.
pub fn derive(global_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(global_seed).wrapping_add(splitmix64(index)))
}

/// Builds the ChaCha8 RNG for work unit `index` under `global_seed`.
pub fn rng_for(global_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(global_seed, index))
}
