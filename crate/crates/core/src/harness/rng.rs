//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every oracle, initializer and sampler in the crate.
pub type LabRng = ChaCha8Rng;

/// One round of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix `(base_seed, run_index)` into a single 64-bit stream seed.
pub fn stream_seed(base_seed: u64, run_index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ splitmix64(run_index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// A deterministic generator for run `run_index` under `base_seed`.
pub fn rng_stream(base_seed: u64, run_index: u64) -> LabRng {
    LabRng::seed_from_u64(stream_seed(base_seed, run_index))
}
