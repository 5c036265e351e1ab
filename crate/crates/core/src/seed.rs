//! Hierarchical seeds: every random stream in an experiment is derived from
//! one master seed by a path of (tag, index) steps, so adding replicates or
//! reordering work never perturbs existing streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and releases, unlike std's hasher.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, tag: &str, index: u64) -> Self {
        let a = splitmix64(self.seed ^ tag_hash(tag));
        Self {
            seed: splitmix64(a ^ splitmix64(index)),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = SeedTree::new(42);
        let mut seen = HashSet::new();
        for tag in ["counters", "trips", "noise"] {
            for i in 0..100 {
                assert!(seen.insert(root.child(tag, i).seed()));
            }
        }
        assert_eq!(root.child("trips", 3), SeedTree::new(42).child("trips", 3));
        assert_ne!(root.child("trips", 3), SeedTree::new(43).child("trips", 3));
    }
}
