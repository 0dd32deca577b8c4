//! Deterministic substream derivation for Monte Carlo work.
//!
//! Streams are keyed by `(seed, cell, replication)` through SplitMix64
//! into a ChaCha key, so results do not depend on scheduling or on which
//! cells run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one `(cell, replication)` work item.
pub fn substream(seed: u64, cell: u64, replication: u64) -> ChaCha12Rng {
    let mut state = seed;
    let a = splitmix64(&mut state);
    let mut state = a ^ cell.wrapping_mul(0xA24B_AED4_963E_E407);
    let b = splitmix64(&mut state);
    let mut state = b ^ replication.wrapping_mul(0x9FB2_1C65_1E98_DF25);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
