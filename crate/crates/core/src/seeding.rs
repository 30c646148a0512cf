//! Seed derivation helpers.
//!
//! Sub-streams are derived from a base seed plus integer tags with splitmix64
//! so that parallel workers (grid configs, folds, trees) get stable,
//! independent streams no matter how work is scheduled.

/// One splitmix64 step.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and up to two tags.
pub(crate) fn derive(base: u64, tag_a: u64, tag_b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag_a) ^ tag_b)
}
