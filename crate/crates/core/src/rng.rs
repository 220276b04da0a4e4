//! Deterministic seeding.
//!
//! Every random stream in a run is derived from the master seed and a string
//! label, so a region's output never depends on scheduling or on which other
//! regions are present.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the engine.
pub type SimRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of `(seed, label)`. Stable across platforms and releases.
pub fn stable_hash(seed: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Per-region seed derived from the master seed and the region identifier.
pub fn region_seed(master_seed: u64, region_id: &str) -> u64 {
    stable_hash(master_seed, region_id)
}

/// Independent named stream below a seed (e.g. "characteristics", "locations").
pub fn substream(seed: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(stable_hash(seed, label))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const FROZEN_R1: u64 = 0xc320_7c75_b991_f1e1;

    #[test]
    fn region_seed_is_stable() {
        // frozen: changing the hash silently changes every published output
        assert_eq!(region_seed(1, "R1"), FROZEN_R1);
        assert_eq!(region_seed(42, "R1"), region_seed(42, "R1"));
        assert_ne!(region_seed(42, "R1"), region_seed(42, "R2"));
        assert_ne!(region_seed(42, "R1"), region_seed(43, "R1"));
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(7, "locations").random();
        let b: u64 = substream(7, "characteristics").random();
        assert_ne!(a, b);
        let a2: u64 = substream(7, "locations").random();
        assert_eq!(a, a2);
    }
}
