//! Counter-derived random streams.
//!
//! Every random cell of a study is addressed by `(seed, row, variable)` and
//! gets its own ChaCha8 key, so any cell can be regenerated in isolation and
//! rows can be produced in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one cell.
pub fn substream(seed: u64, row: u64, variable: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&row.to_le_bytes());
    key[16..24].copy_from_slice(&variable.to_le_bytes());
    key[24..32].copy_from_slice(b"pdpf-rng");
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed, e.g. one per replication.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
