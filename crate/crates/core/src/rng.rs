//! Deterministic random streams: root seed -> side tag -> replica index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream for `(root seed, side tag, replica)`. Streams do not
/// depend on scheduling, so ensembles are reproducible for any thread count.
pub fn stream(root: u64, tag: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(root ^ splitmix(tag.wrapping_add(0x9e37))));
    rng.set_stream(replica);
    rng
}

pub fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Side tags used by the ensemble runners.
pub mod tags {
    pub const FORWARD: u64 = 1;
    pub const DUAL: u64 = 2;
    pub const COALESCENT: u64 = 3;
    pub const LEVY: u64 = 4;
    pub const POPULATION: u64 = 5;
    pub const POISSONIAN: u64 = 6;
    pub const DW: u64 = 7;
    pub const SCALING_A: u64 = 8;
    pub const SCALING_B: u64 = 9;
}
