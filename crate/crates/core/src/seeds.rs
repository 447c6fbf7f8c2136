//! Deterministic sub-seed derivation.
//!
//! Every stochastic step in the crate (balancing, fold shuffling, cohort
//! generation) takes a seed derived from its caller's master seed and a
//! salt identifying the step. Parallel and sequential execution therefore
//! draw from identical streams.

/// splitmix64 finalizer; a full-period 64-bit mixer.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a salt.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt))
}

/// Two-level derivation for nested loops (fold index within a stage, etc.).
pub fn derive_seed2(master: u64, salt_a: u64, salt_b: u64) -> u64 {
    derive_seed(derive_seed(master, salt_a), salt_b)
}
