//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded with an
//! explicit 64-bit seed. Child seeds are derived with SplitMix64:
//!
//! ```text
//! derive_seed(parent, stream, index) = mix(mix(parent ^ stream) + index)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. A child seed depends only on the
//! parent seed, the stream constant and its own index, so appending scenarios
//! or tasks never changes the seeds of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod stream {
    pub const TRAINING_SET: u64 = 0x7472_6169_6e5f_7365;
    pub const TEST_SET: u64 = 0x7465_7374_5f73_6574;
    pub const PERTURB: u64 = 0x7065_7274_7572_6221;
    pub const ARRIVALS: u64 = 0x6172_7269_7661_6c73;
    pub const INIT: u64 = 0x696e_6974_5f70_6172;
    pub const EXPLORE: u64 = 0x6578_706c_6f72_6521;
    pub const REPLAY: u64 = 0x7265_706c_6179_2121;
    pub const TASKS: u64 = 0x7461_736b_735f_5f21;
    pub const ADAPT: u64 = 0x6164_6170_745f_5f21;
    pub const EVAL: u64 = 0x6576_616c_5f5f_5f21;
    pub const POLICY: u64 = 0x706f_6c69_6379_5f21;
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ stream).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, stream: u64, index: u64) -> SimRng {
    rng_from_seed(derive_seed(parent, stream, index))
}
