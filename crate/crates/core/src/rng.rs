//! Seeded, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by a
//! `(seed, index)` pair. Row `i` of a sampled matrix always reads stream `i`,
//! so generating rows in parallel or sequentially yields the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns the stream for `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed by hashing `master` with an ordered list of indices.
///
/// Used to fan out experiment trials: `derive_seed(master, &[grid_point, trial])`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix(master), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

// Domain tags for sub-seeds so that independent uses of one seed never share a stream.
pub(crate) const TAG_NOISE: u64 = 0x6e6f_6973_65;
pub(crate) const TAG_SNR_CALIBRATION: u64 = 0x736e_72;
pub(crate) const TAG_PERTURB: u64 = 0x7065_7274;
pub(crate) const TAG_INIT: u64 = 0x696e_6974;
