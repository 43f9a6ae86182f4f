//! Seed derivation. Every independent work item (repetition, grid point,
//! row, bootstrap replicate) gets its own generator keyed by a stable hash of
//! the master seed and its coordinates, so results are independent of the
//! order in which items run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of `(master, keys...)`.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Hash a string key (e.g. a method name) into a `u64`.
pub fn key_from_str(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn rng_from(master: u64, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, keys))
}

/// Uniform index in `0..n` without modulo bias.
pub fn uniform_index(rng: &mut Rng, n: usize) -> usize {
    use rand::Rng as _;
    rng.random_range(0..n)
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_index(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}

/// `k` distinct indices from `0..n`, returned sorted.
pub fn sample_without_replacement(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut perm = permutation(rng, n);
    perm.truncate(k);
    perm.sort_unstable();
    perm
}

/// Standard normal draws.
pub fn normals(rng: &mut Rng, len: usize) -> Vec<f64> {
    use rand::Rng as _;
    (0..len).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}
