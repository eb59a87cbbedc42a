//! Pending transactions: per-sender queues whose nonces run gapless from
//! the sender's account nonce, drained in arrival order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{validate_tx_static, validate_tx_with_nonce, ChainState, SealedTx, TxError};
use crate::crypto::{Address, Digest32};

pub const DEFAULT_MEMPOOL_CAPACITY: usize = 8192;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SubmitError {
    #[error("mempool is full")]
    MempoolFull,
    #[error("transaction already known")]
    Duplicate,
    #[error(transparent)]
    Invalid(#[from] TxError),
}

/// Whether a future-nonce transaction may wait for its predecessors.
/// Gossip can reorder a sender's transactions; local submissions cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Strict,
    AllowGaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admitted {
    Ready,
    Queued,
}

#[derive(Debug, Clone)]
struct Entry {
    seq: u64,
    tx: SealedTx,
}

#[derive(Debug, Clone)]
pub struct Mempool {
    capacity: usize,
    ready: BTreeMap<Address, VecDeque<Entry>>,
    future: BTreeMap<Address, BTreeMap<u64, Entry>>,
    hashes: HashSet<Digest32>,
    ready_len: usize,
    future_len: usize,
    next_seq: u64,
}

impl Default for Mempool {
    fn default() -> Self {
        Mempool::new(DEFAULT_MEMPOOL_CAPACITY)
    }
}

impl Mempool {
    pub fn new(capacity: usize) -> Self {
        Mempool {
            capacity,
            ready: BTreeMap::new(),
            future: BTreeMap::new(),
            hashes: HashSet::new(),
            ready_len: 0,
            future_len: 0,
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Ready plus queued transactions.
    pub fn len(&self) -> usize {
        self.ready_len + self.future_len
    }

    pub fn ready_len(&self) -> usize {
        self.ready_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, hash: &Digest32) -> bool {
        self.hashes.contains(hash)
    }

    /// Next nonce a new transaction from `addr` must carry.
    pub fn next_nonce(&self, addr: &Address, state: &ChainState) -> u64 {
        state.account(addr).nonce + self.ready.get(addr).map_or(0, |q| q.len() as u64)
    }

    pub fn insert(
        &mut self,
        tx: SealedTx,
        state: &ChainState,
        chain_id: u64,
        admission: Admission,
    ) -> Result<Admitted, SubmitError> {
        if self.hashes.contains(&tx.hash()) {
            return Err(SubmitError::Duplicate);
        }
        if self.len() >= self.capacity {
            return Err(SubmitError::MempoolFull);
        }
        let expected = self.next_nonce(&tx.from, state);
        if tx.nonce > expected && admission == Admission::AllowGaps {
            validate_tx_static(&tx, chain_id)?;
            let slot = self.future.entry(tx.from).or_default();
            if slot.contains_key(&tx.nonce) {
                return Err(SubmitError::Duplicate);
            }
            self.hashes.insert(tx.hash());
            slot.insert(tx.nonce, Entry { seq: self.next_seq, tx });
            self.next_seq += 1;
            self.future_len += 1;
            return Ok(Admitted::Queued);
        }
        validate_tx_with_nonce(&tx, state, chain_id, expected)?;
        let from = tx.from;
        self.push_ready(from, tx);
        self.promote(&from, state, chain_id);
        Ok(Admitted::Ready)
    }

    fn push_ready(&mut self, from: Address, tx: SealedTx) {
        self.hashes.insert(tx.hash());
        self.ready.entry(from).or_default().push_back(Entry { seq: self.next_seq, tx });
        self.next_seq += 1;
        self.ready_len += 1;
    }

    /// Moves queued transactions that now continue the ready run.
    fn promote(&mut self, from: &Address, state: &ChainState, chain_id: u64) {
        loop {
            let expected = self.next_nonce(from, state);
            let Some(slot) = self.future.get_mut(from) else {
                return;
            };
            let Some(entry) = slot.remove(&expected) else {
                return;
            };
            self.future_len -= 1;
            if slot.is_empty() {
                self.future.remove(from);
            }
            self.hashes.remove(&entry.tx.hash());
            if validate_tx_with_nonce(&entry.tx, state, chain_id, expected).is_err() {
                return;
            }
            self.hashes.insert(entry.tx.hash());
            self.ready.entry(*from).or_default().push_back(entry);
            self.ready_len += 1;
        }
    }

    /// Ready transactions, nonce-ordered per sender and otherwise in arrival order.
    pub fn pending(&self) -> Vec<&SealedTx> {
        let mut heap: BinaryHeap<Reverse<(u64, &Address, usize)>> = self
            .ready
            .iter()
            .filter_map(|(a, q)| q.front().map(|e| Reverse((e.seq, a, 0))))
            .collect();
        let mut out = Vec::with_capacity(self.ready_len);
        while let Some(Reverse((_, addr, i))) = heap.pop() {
            let q = &self.ready[addr];
            out.push(&q[i].tx);
            if let Some(next) = q.get(i + 1) {
                heap.push(Reverse((next.seq, addr, i + 1)));
            }
        }
        out
    }

    /// Drops transactions made stale by a new head and promotes queued ones.
    pub fn reset(&mut self, state: &ChainState, chain_id: u64) {
        let senders: Vec<Address> = self.ready.keys().chain(self.future.keys()).copied().collect();
        for addr in senders {
            let nonce = state.account(&addr).nonce;
            if let Some(q) = self.ready.get_mut(&addr) {
                while q.front().is_some_and(|e| e.tx.nonce < nonce) {
                    let e = q.pop_front().expect("front");
                    self.hashes.remove(&e.tx.hash());
                    self.ready_len -= 1;
                }
                // a gap means the chain moved backwards; fall back to the queue
                if q.front().is_some_and(|e| e.tx.nonce > nonce) {
                    let moved: Vec<Entry> = q.drain(..).collect();
                    self.ready_len -= moved.len();
                    let slot = self.future.entry(addr).or_default();
                    for e in moved {
                        slot.insert(e.tx.nonce, e);
                        self.future_len += 1;
                    }
                }
                if q.is_empty() {
                    self.ready.remove(&addr);
                }
            }
            if let Some(slot) = self.future.get_mut(&addr) {
                let stale: Vec<u64> = slot.range(..nonce).map(|(n, _)| *n).collect();
                for n in stale {
                    let e = slot.remove(&n).expect("present");
                    self.hashes.remove(&e.tx.hash());
                    self.future_len -= 1;
                }
                if slot.is_empty() {
                    self.future.remove(&addr);
                }
            }
            self.promote(&addr, state, chain_id);
        }
    }

    /// After a reorg: re-admits `returned` (from the abandoned branch) ahead
    /// of the current contents, against the new head state.
    pub fn rebuild(&mut self, returned: Vec<SealedTx>, state: &ChainState, chain_id: u64) {
        let mut current: Vec<Entry> = Vec::with_capacity(self.len());
        for (_, q) in std::mem::take(&mut self.ready) {
            current.extend(q);
        }
        for (_, slot) in std::mem::take(&mut self.future) {
            current.extend(slot.into_values());
        }
        current.sort_by_key(|e| e.seq);
        self.hashes.clear();
        self.ready_len = 0;
        self.future_len = 0;
        for tx in returned.into_iter().chain(current.into_iter().map(|e| e.tx)) {
            let _ = self.insert(tx, state, chain_id, Admission::AllowGaps);
        }
    }

    /// Checks internal invariants; used by tests.
    pub fn check_invariants(&self, state: &ChainState) -> Result<(), String> {
        let mut seen = HashSet::new();
        let mut count = 0;
        for (addr, q) in &self.ready {
            let base = state.account(addr).nonce;
            for (i, e) in q.iter().enumerate() {
                if e.tx.nonce != base + i as u64 {
                    return Err(format!("gap for {addr} at {}", e.tx.nonce));
                }
                if !seen.insert(e.tx.hash()) {
                    return Err("duplicate hash".into());
                }
                count += 1;
            }
        }
        for slot in self.future.values() {
            for e in slot.values() {
                if !seen.insert(e.tx.hash()) {
                    return Err("duplicate hash".into());
                }
                count += 1;
            }
        }
        if count != self.len() || seen != self.hashes {
            return Err("length or index mismatch".into());
        }
        Ok(())
    }
}
