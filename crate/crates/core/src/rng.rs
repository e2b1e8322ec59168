//! Seed derivation.
//!
//! Every random draw in a run comes from a generator seeded by
//! `derive_seed(master, tags)`. The mixing is splitmix64 over the tag list,
//! so sub-seeds depend only on the master seed and the tags, never on how
//! many other generators were created before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Tags naming the purpose of a derived generator.
pub mod tag {
    pub const STREAM: u64 = 0x5354_5245_414d;
    pub const VICTIM: u64 = 0x5649_4354_494d;
    pub const COLLISION: u64 = 0x434f_4c4c;
    pub const WEAK_LINK: u64 = 0x5745_414b;
    pub const COUPLING: u64 = 0x434f_5550;
    pub const PAYLOAD: u64 = 0x5041_594c;
    pub const CORRUPT_VALUE: u64 = 0x4356_414c;
    pub const BACKOFF: u64 = 0x4241_434b;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn derive_rng(master: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tags))
}
