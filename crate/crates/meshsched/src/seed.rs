//! Deterministic sub-seed derivation.
//!
//! Every random draw in the crate flows from an explicit `u64` seed through
//! [`derive`], so adding schedulers or reordering sweep rows never perturbs
//! instance generation.

/// splitmix64 step; decorrelates nearby seed values.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `base` and an ordered list of context tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(base), |acc, &t| {
        splitmix64(acc ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    })
}
