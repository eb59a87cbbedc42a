//! What the service needs from a chain, implemented for a running TCP node
//! and for one node of the in-memory simulator.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, Receipt, SealedBlock, SealedTx};
use crate::crypto::{Address, Digest32};
use crate::node::runtime::NodeHandle;
use crate::node::sim::Sim;
use crate::node::{Node, SubmitError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadInfo {
    pub number: u64,
    pub hash: Digest32,
    pub timestamp: u64,
    pub tx_count: usize,
    /// Decimal string; may exceed 2^53.
    pub total_difficulty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    Rejected(SubmitError),
    Unavailable(String),
}

pub trait ChainBackend: Send + Sync {
    fn config(&self) -> ChainConfig;
    fn submit_tx(&self, tx: SealedTx) -> Result<Digest32, BackendError>;
    fn head(&self) -> HeadInfo;
    fn block_by_number(&self, number: u64) -> Option<SealedBlock>;
    fn block_by_hash(&self, hash: &Digest32) -> Option<SealedBlock>;
    fn receipt(&self, tx_hash: &Digest32) -> Option<Receipt>;
    /// Block number that anchored `hash` on the current head, if any.
    fn anchored_in(&self, hash: &Digest32) -> Option<u64>;
    fn registry_count(&self) -> usize;
    fn next_nonce(&self, address: &Address) -> u64;
    fn state_digest(&self) -> Digest32;
}

/// Shared plumbing for backends that can lend out a `&Node`.
pub trait NodeAccess: Send + Sync {
    fn with_node<R>(&self, f: impl FnOnce(&Node) -> R) -> R;
    fn submit(&self, tx: SealedTx) -> Result<Digest32, BackendError>;
}

impl<T: NodeAccess> ChainBackend for T {
    fn config(&self) -> ChainConfig {
        self.with_node(|n| n.config().clone())
    }

    fn submit_tx(&self, tx: SealedTx) -> Result<Digest32, BackendError> {
        self.submit(tx)
    }

    fn head(&self) -> HeadInfo {
        self.with_node(|n| {
            let h = n.head();
            HeadInfo {
                number: h.number(),
                hash: h.hash(),
                timestamp: h.header().timestamp,
                tx_count: h.transactions().len(),
                total_difficulty: n.total_difficulty().to_string(),
            }
        })
    }

    fn block_by_number(&self, number: u64) -> Option<SealedBlock> {
        self.with_node(|n| n.block_by_number(number).cloned())
    }

    fn block_by_hash(&self, hash: &Digest32) -> Option<SealedBlock> {
        self.with_node(|n| n.block_by_hash(hash).cloned())
    }

    fn receipt(&self, tx_hash: &Digest32) -> Option<Receipt> {
        self.with_node(|n| n.receipt(tx_hash).cloned())
    }

    fn anchored_in(&self, hash: &Digest32) -> Option<u64> {
        self.with_node(|n| n.head_state().registry.anchored_in(hash))
    }

    fn registry_count(&self) -> usize {
        self.with_node(|n| n.head_state().registry.count())
    }

    fn next_nonce(&self, address: &Address) -> u64 {
        self.with_node(|n| n.next_nonce(address))
    }

    fn state_digest(&self) -> Digest32 {
        self.with_node(|n| n.head_state().digest())
    }
}

impl NodeAccess for NodeHandle {
    fn with_node<R>(&self, f: impl FnOnce(&Node) -> R) -> R {
        f(&self.read())
    }

    fn submit(&self, tx: SealedTx) -> Result<Digest32, BackendError> {
        match self.submit_tx(tx) {
            Ok(r) => r.map_err(BackendError::Rejected),
            Err(e) => Err(BackendError::Unavailable(e.to_string())),
        }
    }
}

/// One node of a shared simulator. The owner advances virtual time.
#[derive(Clone)]
pub struct SimBackend {
    pub sim: Arc<Mutex<Sim>>,
    pub node: usize,
}

impl SimBackend {
    pub fn new(sim: Sim, node: usize) -> Self {
        SimBackend {
            sim: Arc::new(Mutex::new(sim)),
            node,
        }
    }
}

impl NodeAccess for SimBackend {
    fn with_node<R>(&self, f: impl FnOnce(&Node) -> R) -> R {
        f(self.sim.lock().node(self.node))
    }

    fn submit(&self, tx: SealedTx) -> Result<Digest32, BackendError> {
        self.sim.lock().submit_tx(self.node, tx).map_err(BackendError::Rejected)
    }
}
