//! Seed derivation and fold partitioning.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit value.
//! Child seeds are derived with the SplitMix64 finalizer so that results do not
//! depend on platform, thread count or evaluation order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `i` of `master`.
#[inline]
pub fn child_seed(master: u64, i: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Folds a sequence of words into one seed.
pub fn combine_seeds(parts: &[u64]) -> u64 {
    parts.iter().fold(0x2545_F491_4F6C_DD1D, |acc, &w| child_seed(acc, w))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded shuffle of `0..n` cut into `folds` contiguous blocks whose sizes differ
/// by at most one (the first `n % folds` blocks get the extra element).
pub fn kfold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(folds >= 1 && folds <= n, "need 1 <= folds <= n");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        let mut block = order[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    out
}

/// Complement of `held_out` (sorted) within `0..n`.
pub fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
