//! Seed derivation.
//!
//! Child seeds are derived by folding each component into a SplitMix64
//! state: `h = splitmix64(h ^ component)` starting from
//! `0x9E37_79B9_7F4A_7C15`. The function is stable across platforms and
//! releases, which keeps sweeps and synthetic datasets reproducible.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(GOLDEN, |h, &p| splitmix64(h ^ p))
}
