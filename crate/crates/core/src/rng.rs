//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a base seed and a path of stream labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `label` under `seed`.
pub fn derive(seed: u64, label: u64) -> u64 {
    mix(mix(seed) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn derive_str(seed: u64, label: &str) -> u64 {
    let h = label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3));
    derive(seed, h)
}

pub fn stream(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_str(seed, label))
}

pub fn indexed(seed: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(derive_str(seed, label), index))
}
