//! Deterministic seed derivation.
//!
//! Every random stream in a run is a ChaCha8 generator seeded from the master
//! seed mixed with a stream tag and an index, so results never depend on
//! evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_INIT_POPULATION: u64 = 0x01;
pub const STREAM_GENERATION: u64 = 0x02;
pub const STREAM_FITNESS: u64 = 0x03;
pub const STREAM_FINAL_TRAIN: u64 = 0x04;
pub const STREAM_SPLIT: u64 = 0x05;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}
