//! Reproducible random streams.
//!
//! Every random quantity comes from a ChaCha8 generator (`rand_chacha`)
//! seeded with `seed_from_u64(seed)` and switched to a numbered stream with
//! `set_stream`. Child seeds are derived with the SplitMix64 finalizer, so a
//! run is fully determined by `(master_seed, indices...)` independent of
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream of the reference (human) score sequence.
pub const STREAM_X: u64 = 1;
/// Stream of the unknown-source score sequence.
pub const STREAM_Y: u64 = 2;
/// Stream holding the single uniform used by the terminal randomized check.
pub const STREAM_FINALIZE: u64 = 3;
/// Stream used for permutation resampling in the baselines.
pub const STREAM_PERMUTATION: u64 = 4;
/// Stream used by the calibration shuffles.
pub const STREAM_CALIBRATION: u64 = 5;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pure hash of a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |h, &p| mix64(h ^ mix64(p.wrapping_add(GOLDEN))))
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
