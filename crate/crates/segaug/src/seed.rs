//! Deterministic seeding shared by the augmentation pipeline and samplers.
//!
//! All randomness in this crate flows through a ChaCha8 stream cipher seeded
//! from a single `u64`, so a run is reproducible from its recorded seed alone
//! and batch workers can derive per-item seeds without coordination.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the generator algorithm, recorded in augmentation manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Creates the crate-wide reproducible generator for a 64-bit seed.
pub fn new_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 64-bit FNV-1a over the master seed (little-endian bytes) followed by the
/// key bytes. Used to derive per-image seeds as `hash64(master, rel_path)`,
/// which makes parallel and serial batch runs produce identical outputs.
pub fn hash64(master_seed: u64, key: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x1000_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in master_seed.to_le_bytes().into_iter().chain(key.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Draws `k` items uniformly without replacement via a partial Fisher-Yates
/// shuffle; the first `k` slots of the returned vector are the draw order.
pub(crate) fn draw_without_replacement<T: Clone>(
    items: &[T],
    k: usize,
    rng: &mut impl rand::Rng,
) -> Vec<T> {
    let mut pool = items.to_vec();
    let take = k.min(pool.len());
    for i in 0..take {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool
}
