//! Deterministic random streams.
//!
//! Every Monte Carlo trial draws from its own generator derived from
//! `(master_seed, sweep_value, trial_index)`, so results do not depend on
//! scheduling or thread count. ChaCha8 is used because its output is stable
//! across platforms and crate versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; mixes one 64-bit word into the running state.
fn mix(state: u64, word: u64) -> u64 {
    let mut z = state.wrapping_add(word).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one `(master_seed, sweep_value, trial_index)` stream.
pub fn trial_rng(master_seed: u64, sweep_value: f64, trial_index: u64) -> ChaCha8Rng {
    let mut s = mix(master_seed, 0x5157_9ab4_0f23_c1d7);
    s = mix(s, sweep_value.to_bits());
    s = mix(s, trial_index);
    ChaCha8Rng::seed_from_u64(s)
}

/// Generator for auxiliary draws keyed by an arbitrary label (benchmarks,
/// standalone sampling).
pub fn labeled_rng(master_seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master_seed, label))
}
