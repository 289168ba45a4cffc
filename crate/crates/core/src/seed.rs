//! Named seed sub-streams.
//!
//! Every random draw in the crate descends from one top-level `u64` seed.
//! [`derive_seed`] mixes the parent seed, a stream label and an index through
//! SplitMix64 so that e.g. the scenario stream of episode 17 never shares
//! state with the exploration stream of the agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used everywhere.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(parent ^ label_hash(label));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(parent: u64, label: &str, index: u64) -> SimRng {
    rng_from(derive_seed(parent, label, index))
}
