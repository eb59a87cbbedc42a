//! The on-chain record registry: an append-ordered list of anchored AR
//! hashes with an O(1) membership index.
//!
//! Duplicate stores are deduplicated; the entries list keeps first-insertion
//! order. There is no removal: once a hash is anchored on a chain it stays
//! anchored on every extension of that chain.

use serde::{Deserialize, Serialize};

use crate::crypto::Digest32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub hash: Digest32,
    pub block_number: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreOutcome {
    Inserted,
    AlreadyPresent,
}

/// Structurally shared, so cloning per block is cheap.
#[derive(Debug, Clone, Default)]
pub struct RegistryState {
    entries: im::Vector<RegistryEntry>,
    index: im::HashMap<Digest32, u64>,
}

impl RegistryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, hash: Digest32, block_number: u64) -> StoreOutcome {
        if self.index.contains_key(&hash) {
            return StoreOutcome::AlreadyPresent;
        }
        self.index.insert(hash, block_number);
        self.entries.push_back(RegistryEntry { hash, block_number });
        StoreOutcome::Inserted
    }

    pub fn check(&self, hash: &Digest32) -> bool {
        self.index.contains_key(hash)
    }

    /// Block number of the block that first anchored `hash`.
    pub fn anchored_in(&self, hash: &Digest32) -> Option<u64> {
        self.index.get(hash).copied()
    }

    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.iter()
    }

    pub fn snapshot(&self) -> Vec<RegistryEntry> {
        self.entries.iter().copied().collect()
    }

    pub fn from_snapshot(entries: &[RegistryEntry]) -> Self {
        let mut r = RegistryState::new();
        for e in entries {
            r.store(e.hash, e.block_number);
        }
        r
    }
}

impl PartialEq for RegistryState {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for RegistryState {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keccak256;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn h(i: u64) -> Digest32 {
        keccak256(&i.to_be_bytes())
    }

    #[test]
    fn store_and_dedup() {
        let mut r = RegistryState::new();
        assert_eq!(r.count(), 0);
        assert!(!r.check(&h(1)));
        assert_eq!(r.store(h(1), 3), StoreOutcome::Inserted);
        assert_eq!(r.count(), 1);
        assert_eq!(r.store(h(1), 9), StoreOutcome::AlreadyPresent);
        assert_eq!(r.count(), 1);
        assert_eq!(r.anchored_in(&h(1)), Some(3));
        assert!(r.check(&h(1)));
    }

    #[test]
    fn thousand_distinct_hashes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = RegistryState::new();
        let mut oracle = HashSet::new();
        for _ in 0..1000 {
            let d = Digest32(rng.gen());
            oracle.insert(d);
            r.store(d, 1);
        }
        assert_eq!(r.count(), oracle.len());
        assert_eq!(r.count(), 1000);
    }

    #[test]
    fn count_with_duplicates_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = RegistryState::new();
        let mut oracle = HashSet::new();
        let mut dups = 0;
        for _ in 0..500 {
            let d = h(rng.gen_range(0..200));
            if !oracle.insert(d) {
                dups += 1;
            }
            r.store(d, 0);
        }
        assert_eq!(r.count(), 500 - dups);
    }

    #[test]
    fn check_agrees_with_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = RegistryState::new();
        for _ in 0..300 {
            r.store(h(rng.gen_range(0..1000)), 0);
        }
        for _ in 0..10_000 {
            let probe = h(rng.gen_range(0..1200));
            let scan = r.entries().any(|e| e.hash == probe);
            assert_eq!(r.check(&probe), scan);
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut r = RegistryState::new();
        for i in 0..50 {
            r.store(h(i % 30), i);
        }
        let copy = RegistryState::from_snapshot(&r.snapshot());
        assert_eq!(copy, r);
        assert_eq!(copy.anchored_in(&h(5)), Some(5));
    }
}
