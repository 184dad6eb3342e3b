//! Seed tree for reproducible random streams.
//!
//! Every stochastic draw in the simulator comes from a ChaCha stream keyed by the
//! master seed plus a path of integer tags (`domain`, counters, indices). Two runs
//! with the same seed and the same operation sequence see identical streams no
//! matter how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains. Distinct tags keep unrelated consumers from sharing draws.
pub mod domain {
    pub const DEVICE: u64 = 0x01;
    pub const PULSE: u64 = 0x02;
    pub const MVM: u64 = 0x03;
    pub const TARGET: u64 = 0x04;
    pub const GDP_INPUT: u64 = 0x05;
    pub const CHAR_INPUT: u64 = 0x06;
    pub const CHAR_MVM: u64 = 0x07;
    pub const INFER_MVM: u64 = 0x08;
    pub const DATASET: u64 = 0x09;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed and a tag path into a single 64-bit key.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5EED_0000_A1C0_0000);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    h
}

pub fn stream(seed: u64, tags: &[u64]) -> Stream {
    let k0 = mix(seed, tags);
    let mut bytes = [0u8; 32];
    let mut h = k0;
    for chunk in bytes.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
