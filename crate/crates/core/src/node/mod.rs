//! The full node as a deterministic state machine.
//!
//! A [`Node`] never touches a clock, socket or thread. Callers feed it
//! [`Input`]s stamped with the current time in milliseconds and carry out
//! the [`Output`]s it returns. The simulator and the TCP runtime are two
//! such callers.

pub mod mempool;
pub mod message;
pub mod runtime;
pub mod sim;
pub mod store;

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;

use lru::LruCache;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    assemble_block, validate_block, Assembled, Block, BlockError, BlockHeader, BlockTemplate, ChainConfig,
    ChainState, ConsensusKind, Genesis, Receipt, Seal, SealedBlock, SealedTx, TxStatus, intrinsic_gas,
};
use crate::consensus::{
    compare_heads, poa_expected_sealer, poa_recent_window, poa_seal, poa_verify, pow_expected_difficulty,
    pow_verify, ChainWeight, PowSolution,
};
use crate::crypto::{Address, Digest32, KeyPair};

pub use mempool::{Admission, Admitted, Mempool, SubmitError, DEFAULT_MEMPOOL_CAPACITY};
pub use message::{CodecError, NetMessage, StatusBody, MAX_BLOCKS_PER_REPLY, MAX_MESSAGE_BYTES};

pub type PeerId = u64;

pub const SEEN_CAPACITY: usize = 65_536;
pub const MAX_ORPHANS: usize = 1024;
/// How far back a sync request starts below the local head.
pub const SYNC_BACKOFF: u64 = 32;
/// Blocks stamped further than this into the future are rejected.
pub const MAX_FUTURE_DRIFT_S: u64 = 15;
/// Upper bound of the random delay an out-of-turn PoA sealer waits.
pub const OUT_OF_TURN_DELAY_MS: u64 = 500;
/// PoW miners rebuild their candidate at this interval to pick up new transactions.
pub const POW_RECOMMIT_MS: u64 = 3000;

#[derive(Clone, Debug)]
pub enum Role {
    Observer,
    Sealer(KeyPair),
    Miner(Address),
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::Observer => "observer",
            Role::Sealer(_) => "sealer",
            Role::Miner(_) => "miner",
        }
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("invalid chain config: {0}")]
    Config(String),
    #[error("sealer role requires a key in the sealer set")]
    NotASealer,
    #[error("role {role} does not match {consensus} consensus")]
    RoleMismatch { role: &'static str, consensus: ConsensusKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "timer", rename_all = "snake_case")]
pub enum Timer {
    Produce { generation: u64 },
    Recommit { generation: u64 },
}

#[derive(Debug, Clone)]
pub struct MineJob {
    pub id: u64,
    /// Unsealed header with the difficulty the seal must meet.
    pub header: BlockHeader,
}

#[derive(Debug, Clone)]
pub enum Input {
    Message { from: PeerId, msg: NetMessage },
    PeerUp(PeerId),
    PeerDown(PeerId),
    Timer(Timer),
    PowSolved { job: u64, solution: PowSolution },
}

#[derive(Debug, Clone)]
pub enum Output {
    Send { to: PeerId, msg: NetMessage },
    SetTimer { at_ms: u64, timer: Timer },
    Mine(MineJob),
    Disconnect(PeerId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportResult {
    Known,
    Imported { new_head: bool },
    Queued,
    Rejected(ImportError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImportError {
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("timestamp too far in the future")]
    FutureBlock,
    #[error("parent state unavailable")]
    StateUnavailable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub blocks_produced: u64,
    pub blocks_imported: u64,
    pub blocks_rejected: u64,
    pub reorgs: u64,
    pub messages_sent: u64,
}

struct BlockEntry {
    block: SealedBlock,
    /// `None` for blocks restored below a trusted snapshot.
    state: Option<ChainState>,
    total_difficulty: u128,
    receipts: Vec<Receipt>,
}

pub struct Node {
    genesis: Genesis,
    config: ChainConfig,
    genesis_hash: Digest32,
    role: Role,
    producing: bool,
    blocks: HashMap<Digest32, BlockEntry>,
    canonical: Vec<Digest32>,
    receipts: HashMap<Digest32, Receipt>,
    mempool: Mempool,
    seen: LruCache<Digest32, ()>,
    orphans: HashMap<Digest32, Vec<(SealedBlock, Option<PeerId>)>>,
    orphan_count: usize,
    peers: BTreeSet<PeerId>,
    rng: ChaCha8Rng,
    produce_generation: u64,
    recommit_generation: u64,
    mine_job: Option<(u64, Assembled)>,
    next_job_id: u64,
    imported_log: Vec<SealedBlock>,
    stats: NodeStats,
}

impl Node {
    pub fn new(genesis: Genesis, role: Role, seed: u64) -> Result<Self, NodeError> {
        Self::with_mempool(genesis, role, seed, DEFAULT_MEMPOOL_CAPACITY)
    }

    pub fn with_mempool(genesis: Genesis, role: Role, seed: u64, capacity: usize) -> Result<Self, NodeError> {
        let config = genesis.config.clone();
        config.validate().map_err(NodeError::Config)?;
        match (&role, config.consensus) {
            (Role::Sealer(k), ConsensusKind::PoA) => {
                if !config.poa_sealers.contains(&k.address()) {
                    return Err(NodeError::NotASealer);
                }
            }
            (Role::Miner(_), ConsensusKind::PoW) | (Role::Observer, _) => {}
            (r, c) => {
                return Err(NodeError::RoleMismatch {
                    role: r.name(),
                    consensus: c,
                })
            }
        }
        let gblock = genesis.block();
        let genesis_hash = gblock.hash();
        let mut blocks = HashMap::new();
        blocks.insert(
            genesis_hash,
            BlockEntry {
                total_difficulty: gblock.header().difficulty as u128,
                state: Some(genesis.state()),
                block: gblock,
                receipts: Vec::new(),
            },
        );
        Ok(Node {
            genesis,
            config,
            genesis_hash,
            role,
            producing: true,
            blocks,
            canonical: vec![genesis_hash],
            receipts: HashMap::new(),
            mempool: Mempool::new(capacity),
            seen: LruCache::new(NonZeroUsize::new(SEEN_CAPACITY).expect("nonzero")),
            orphans: HashMap::new(),
            orphan_count: 0,
            peers: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            produce_generation: 0,
            recommit_generation: 0,
            mine_job: None,
            next_job_id: 0,
            imported_log: Vec::new(),
            stats: NodeStats::default(),
        })
    }

    // ---- queries ----

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn genesis_hash(&self) -> Digest32 {
        self.genesis_hash
    }

    pub fn role(&self) -> &Role {
        &self.role
    }

    pub fn is_producer(&self) -> bool {
        !matches!(self.role, Role::Observer)
    }

    pub fn head_hash(&self) -> Digest32 {
        *self.canonical.last().expect("genesis present")
    }

    pub fn head(&self) -> &SealedBlock {
        &self.blocks[&self.head_hash()].block
    }

    pub fn head_number(&self) -> u64 {
        (self.canonical.len() - 1) as u64
    }

    pub fn head_state(&self) -> &ChainState {
        self.blocks[&self.head_hash()]
            .state
            .as_ref()
            .expect("head always has state")
    }

    pub fn total_difficulty(&self) -> u128 {
        self.blocks[&self.head_hash()].total_difficulty
    }

    pub fn block_by_number(&self, number: u64) -> Option<&SealedBlock> {
        self.canonical
            .get(number as usize)
            .map(|h| &self.blocks[h].block)
    }

    pub fn block_by_hash(&self, hash: &Digest32) -> Option<&SealedBlock> {
        self.blocks.get(hash).map(|e| &e.block)
    }

    pub fn canonical_hashes(&self) -> &[Digest32] {
        &self.canonical
    }

    /// Receipt of a transaction included on the canonical chain.
    pub fn receipt(&self, tx_hash: &Digest32) -> Option<&Receipt> {
        self.receipts.get(tx_hash)
    }

    pub fn next_nonce(&self, addr: &Address) -> u64 {
        self.mempool.next_nonce(addr, self.head_state())
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerId> {
        self.peers.iter()
    }

    pub fn stats(&self) -> NodeStats {
        self.stats
    }

    pub fn status(&self) -> StatusBody {
        StatusBody {
            chain_id: self.config.chain_id,
            genesis_hash: self.genesis_hash,
            head_hash: self.head_hash(),
            head_number: self.head_number(),
            total_difficulty: self.total_difficulty(),
        }
    }

    pub fn known_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks accepted since the last call, in import order.
    pub fn drain_imported(&mut self) -> Vec<SealedBlock> {
        std::mem::take(&mut self.imported_log)
    }

    // ---- control ----

    /// Kicks off block production for producer roles.
    pub fn start(&mut self, now_ms: u64) -> Vec<Output> {
        let mut out = Vec::new();
        self.schedule_production(now_ms, &mut out);
        out
    }

    /// Enables or disables block production; disabling invalidates pending timers and jobs.
    pub fn set_producing(&mut self, now_ms: u64, on: bool) -> Vec<Output> {
        self.producing = on;
        self.produce_generation += 1;
        self.recommit_generation += 1;
        self.mine_job = None;
        let mut out = Vec::new();
        if on {
            self.schedule_production(now_ms, &mut out);
        }
        out
    }

    pub fn submit_tx(&mut self, now_ms: u64, tx: SealedTx) -> (Result<Digest32, SubmitError>, Vec<Output>) {
        let _ = now_ms;
        let hash = tx.hash();
        let mut out = Vec::new();
        let state = self.head_state().clone();
        let result = self
            .mempool
            .insert(tx.clone(), &state, self.config.chain_id, Admission::Strict);
        match result {
            Ok(_) => {
                self.seen.put(hash, ());
                self.flood(NetMessage::NewTx(tx), None, &mut out);
                (Ok(hash), out)
            }
            Err(e) => (Err(e), out),
        }
    }

    pub fn handle(&mut self, now_ms: u64, input: Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::PeerUp(p) => {
                self.peers.insert(p);
                out.push(Output::Send {
                    to: p,
                    msg: NetMessage::Status(self.status()),
                });
            }
            Input::PeerDown(p) => {
                self.peers.remove(&p);
            }
            Input::Message { from, msg } => self.on_message(now_ms, from, msg, &mut out),
            Input::Timer(t) => self.on_timer(now_ms, t, &mut out),
            Input::PowSolved { job, solution } => self.on_pow_solved(now_ms, job, solution, &mut out),
        }
        self.stats.messages_sent += out.iter().filter(|o| matches!(o, Output::Send { .. })).count() as u64;
        out
    }

    /// Imports a block from outside the network layer (e.g. a local file).
    pub fn import_block(&mut self, now_ms: u64, block: SealedBlock) -> (ImportResult, Vec<Output>) {
        let mut out = Vec::new();
        let r = self.import(now_ms, block, None, false, &mut out);
        (r, out)
    }

    /// Inserts a block known to be valid together with its post-state,
    /// skipping execution. Used when restoring from a snapshot.
    pub fn restore_trusted(&mut self, block: SealedBlock, state: Option<ChainState>) -> bool {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return true;
        }
        let Some(parent) = self.blocks.get(&block.header().parent_hash) else {
            return false;
        };
        let td = parent.total_difficulty + block.header().difficulty as u128;
        // execution is total, so receipts follow from the transactions alone
        let receipts: Vec<Receipt> = block
            .transactions()
            .iter()
            .map(|tx| Receipt {
                tx_hash: tx.hash(),
                block_hash: hash,
                block_number: block.number(),
                status: TxStatus::Success,
                gas_used: intrinsic_gas(tx),
            })
            .collect();
        if block.header().parent_hash == self.head_hash() {
            self.canonical.push(hash);
            for r in &receipts {
                self.receipts.insert(r.tx_hash, r.clone());
            }
        }
        self.blocks.insert(
            hash,
            BlockEntry {
                block,
                state,
                total_difficulty: td,
                receipts,
            },
        );
        true
    }

    /// Sets the state of the current head after a trusted restore.
    pub fn restore_head_state(&mut self, state: ChainState) {
        let h = self.head_hash();
        if let Some(e) = self.blocks.get_mut(&h) {
            e.state = Some(state);
        }
        self.mempool = Mempool::new(self.mempool.capacity());
    }

    // ---- internals ----

    fn flood(&mut self, msg: NetMessage, except: Option<PeerId>, out: &mut Vec<Output>) {
        for p in &self.peers {
            if Some(*p) != except {
                out.push(Output::Send {
                    to: *p,
                    msg: msg.clone(),
                });
            }
        }
    }

    fn on_message(&mut self, now_ms: u64, from: PeerId, msg: NetMessage, out: &mut Vec<Output>) {
        match msg {
            NetMessage::NewTx(tx) => {
                let hash = tx.hash();
                if self.seen.put(hash, ()).is_some() {
                    return;
                }
                let state = self.head_state().clone();
                let admitted = self.mempool.insert(
                    tx.clone(),
                    &state,
                    self.config.chain_id,
                    Admission::AllowGaps,
                );
                if admitted.is_ok() {
                    self.flood(NetMessage::NewTx(tx), Some(from), out);
                }
            }
            NetMessage::NewBlock(block) => {
                if self.seen.put(block.hash(), ()).is_some() {
                    return;
                }
                self.import(now_ms, block, Some(from), true, out);
            }
            NetMessage::GetBlocks { from_number, count } => {
                let count = count.min(MAX_BLOCKS_PER_REPLY);
                let list: Vec<SealedBlock> = (from_number..from_number.saturating_add(count))
                    .map_while(|n| self.block_by_number(n).cloned())
                    .collect();
                out.push(Output::Send {
                    to: from,
                    msg: NetMessage::Blocks { list },
                });
            }
            NetMessage::Blocks { list } => {
                let full = list.len() as u64 == MAX_BLOCKS_PER_REPLY;
                let mut last = None;
                for (i, block) in list.into_iter().enumerate() {
                    last = Some(block.number());
                    self.seen.put(block.hash(), ());
                    let number = block.number();
                    let r = self.import(now_ms, block, Some(from), false, out);
                    if i == 0 && r == ImportResult::Queued {
                        // fork point is further back
                        out.push(Output::Send {
                            to: from,
                            msg: NetMessage::GetBlocks {
                                from_number: number.saturating_sub(SYNC_BACKOFF).max(1),
                                count: MAX_BLOCKS_PER_REPLY,
                            },
                        });
                        return;
                    }
                }
                if let (true, Some(n)) = (full, last) {
                    out.push(Output::Send {
                        to: from,
                        msg: NetMessage::GetBlocks {
                            from_number: n + 1,
                            count: MAX_BLOCKS_PER_REPLY,
                        },
                    });
                }
            }
            NetMessage::Status(s) => {
                if s.chain_id != self.config.chain_id || s.genesis_hash != self.genesis_hash {
                    self.peers.remove(&from);
                    out.push(Output::Disconnect(from));
                    return;
                }
                let ours = (ChainWeight { total_difficulty: self.total_difficulty() }, self.head_hash());
                let theirs = (ChainWeight { total_difficulty: s.total_difficulty }, s.head_hash);
                if !self.blocks.contains_key(&s.head_hash) && compare_heads(theirs, ours).is_gt() {
                    out.push(Output::Send {
                        to: from,
                        msg: NetMessage::GetBlocks {
                            from_number: self.head_number().min(s.head_number).saturating_sub(SYNC_BACKOFF).max(1),
                            count: MAX_BLOCKS_PER_REPLY,
                        },
                    });
                }
            }
        }
    }

    fn recent_signers(&self, parent: Digest32, window: usize) -> Vec<Address> {
        let mut out = Vec::with_capacity(window);
        let mut cur = parent;
        while out.len() < window {
            let Some(e) = self.blocks.get(&cur) else { break };
            if e.block.number() == 0 {
                break;
            }
            out.push(e.block.header().sealer);
            cur = e.block.header().parent_hash;
        }
        out
    }

    fn seal_check(&self, header: &BlockHeader, parent: &SealedBlock) -> bool {
        match self.config.consensus {
            ConsensusKind::PoW => {
                let gp = self.blocks.get(&parent.header().parent_hash).map(|e| e.block.header());
                header.difficulty == pow_expected_difficulty(parent.header(), gp, &self.config) && pow_verify(header)
            }
            ConsensusKind::PoA => {
                let recent = self.recent_signers(parent.hash(), poa_recent_window(&self.config.poa_sealers));
                poa_verify(header, parent.header(), &recent, &self.config)
            }
        }
    }

    fn import(
        &mut self,
        now_ms: u64,
        block: SealedBlock,
        from: Option<PeerId>,
        gossip: bool,
        out: &mut Vec<Output>,
    ) -> ImportResult {
        let first = self.import_one(now_ms, block.clone(), from, out);
        if !matches!(first, ImportResult::Imported { .. }) {
            return first;
        }
        if gossip {
            self.flood(NetMessage::NewBlock(block.clone()), from, out);
        }
        // connect any orphans waiting on this block
        let mut stack = vec![block.hash()];
        while let Some(parent) = stack.pop() {
            let Some(children) = self.orphans.remove(&parent) else { continue };
            self.orphan_count -= children.len();
            for (child, child_from) in children {
                if let ImportResult::Imported { .. } = self.import_one(now_ms, child.clone(), child_from, out) {
                    self.flood(NetMessage::NewBlock(child.clone()), child_from, out);
                    stack.push(child.hash());
                }
            }
        }
        first
    }

    fn import_one(&mut self, now_ms: u64, block: SealedBlock, from: Option<PeerId>, out: &mut Vec<Output>) -> ImportResult {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return ImportResult::Known;
        }
        if block.header().timestamp > now_ms / 1000 + MAX_FUTURE_DRIFT_S {
            self.stats.blocks_rejected += 1;
            return ImportResult::Rejected(ImportError::FutureBlock);
        }
        let parent_hash = block.header().parent_hash;
        let Some(parent) = self.blocks.get(&parent_hash) else {
            if self.orphan_count < MAX_ORPHANS {
                let number = block.number();
                let slot = self.orphans.entry(parent_hash).or_default();
                if !slot.iter().any(|(b, _)| b.hash() == hash) {
                    slot.push((block, from));
                    self.orphan_count += 1;
                }
                if let Some(peer) = from {
                    let start = (self.head_number() + 1).min(number).saturating_sub(SYNC_BACKOFF).max(1);
                    out.push(Output::Send {
                        to: peer,
                        msg: NetMessage::GetBlocks {
                            from_number: start,
                            count: MAX_BLOCKS_PER_REPLY,
                        },
                    });
                }
            }
            return ImportResult::Queued;
        };
        let Some(parent_state) = parent.state.as_ref() else {
            return ImportResult::Rejected(ImportError::StateUnavailable);
        };
        let parent_block = parent.block.clone();
        let parent_td = parent.total_difficulty;
        let result = validate_block(&block, &parent_block, parent_state, &self.config, |h| {
            self.seal_check(h, &parent_block)
        });
        let (state, receipts) = match result {
            Ok(v) => v,
            Err(e) => {
                self.stats.blocks_rejected += 1;
                return ImportResult::Rejected(e.into());
            }
        };
        let td = parent_td + block.header().difficulty as u128;
        self.blocks.insert(
            hash,
            BlockEntry {
                block: block.clone(),
                state: Some(state),
                total_difficulty: td,
                receipts,
            },
        );
        self.stats.blocks_imported += 1;
        self.imported_log.push(block);
        let candidate = (ChainWeight { total_difficulty: td }, hash);
        let current = (ChainWeight { total_difficulty: self.total_difficulty() }, self.head_hash());
        if compare_heads(candidate, current).is_gt() {
            self.set_head(now_ms, hash, out);
            ImportResult::Imported { new_head: true }
        } else {
            ImportResult::Imported { new_head: false }
        }
    }

    fn set_head(&mut self, now_ms: u64, new_head: Digest32, out: &mut Vec<Output>) {
        // walk back to the canonical chain
        let mut branch = Vec::new();
        let mut cur = new_head;
        loop {
            let e = &self.blocks[&cur];
            let n = e.block.number() as usize;
            if self.canonical.get(n) == Some(&cur) {
                break;
            }
            branch.push(cur);
            cur = e.block.header().parent_hash;
        }
        branch.reverse();
        let fork_number = self.blocks[&cur].block.number() as usize;
        let abandoned: Vec<Digest32> = self.canonical.drain(fork_number + 1..).collect();
        let mut returned = Vec::new();
        for h in &abandoned {
            let e = &self.blocks[h];
            for r in &e.receipts {
                self.receipts.remove(&r.tx_hash);
            }
            returned.extend(e.block.transactions().iter().cloned());
        }
        for h in &branch {
            for r in &self.blocks[h].receipts {
                self.receipts.insert(r.tx_hash, r.clone());
            }
            self.canonical.push(*h);
        }
        let state = self.head_state().clone();
        if abandoned.is_empty() {
            self.mempool.reset(&state, self.config.chain_id);
        } else {
            self.stats.reorgs += 1;
            self.mempool.rebuild(returned, &state, self.config.chain_id);
        }
        self.schedule_production(now_ms, out);
    }

    fn schedule_production(&mut self, now_ms: u64, out: &mut Vec<Output>) {
        if !self.producing {
            return;
        }
        match &self.role {
            Role::Observer => {}
            Role::Sealer(key) => {
                let me = key.address();
                let head = self.head().header().clone();
                let number = head.number + 1;
                self.produce_generation += 1;
                let in_turn = poa_expected_sealer(number, &self.config.poa_sealers).ok() == Some(me);
                let delay = if in_turn {
                    0
                } else {
                    self.rng.gen_range(0..=OUT_OF_TURN_DELAY_MS)
                };
                let due = (head.timestamp + self.config.poa_period_s) * 1000 + delay;
                out.push(Output::SetTimer {
                    at_ms: due.max(now_ms),
                    timer: Timer::Produce {
                        generation: self.produce_generation,
                    },
                });
            }
            Role::Miner(_) => {
                self.new_mine_job(now_ms, out);
                self.recommit_generation += 1;
                out.push(Output::SetTimer {
                    at_ms: now_ms + POW_RECOMMIT_MS,
                    timer: Timer::Recommit {
                        generation: self.recommit_generation,
                    },
                });
            }
        }
    }

    fn new_mine_job(&mut self, now_ms: u64, out: &mut Vec<Output>) {
        let Role::Miner(addr) = self.role else { return };
        let head = self.head().clone();
        let gp = self.blocks.get(&head.header().parent_hash).map(|e| e.block.header());
        let difficulty = pow_expected_difficulty(head.header(), gp, &self.config);
        let template = BlockTemplate {
            timestamp: (head.header().timestamp + 1).max(now_ms / 1000),
            sealer: addr,
            difficulty,
        };
        let assembled = assemble_block(
            head.header(),
            head.hash(),
            self.head_state(),
            self.mempool.pending(),
            &self.config,
            template,
        );
        self.next_job_id += 1;
        let header = assembled.block.header.clone();
        self.mine_job = Some((self.next_job_id, assembled));
        out.push(Output::Mine(MineJob {
            id: self.next_job_id,
            header,
        }));
    }

    fn on_timer(&mut self, now_ms: u64, timer: Timer, out: &mut Vec<Output>) {
        if !self.producing {
            return;
        }
        match timer {
            Timer::Produce { generation } if generation == self.produce_generation => {
                self.try_seal_poa(now_ms, out);
            }
            Timer::Recommit { generation } if generation == self.recommit_generation => {
                let stale = match &self.mine_job {
                    Some((_, a)) => {
                        let room = a.block.header.gas_used + crate::chain::TX_BASE_GAS <= self.config.block_gas_limit;
                        room && self.mempool.ready_len() > a.block.transactions.len()
                    }
                    None => true,
                };
                if stale {
                    self.new_mine_job(now_ms, out);
                }
                out.push(Output::SetTimer {
                    at_ms: now_ms + POW_RECOMMIT_MS,
                    timer: Timer::Recommit { generation },
                });
            }
            _ => {}
        }
    }

    fn try_seal_poa(&mut self, now_ms: u64, out: &mut Vec<Output>) {
        let Role::Sealer(key) = &self.role else { return };
        let key = key.clone();
        let me = key.address();
        let head = self.head().clone();
        let window = poa_recent_window(&self.config.poa_sealers);
        if self.recent_signers(head.hash(), window).contains(&me) {
            return;
        }
        let template = BlockTemplate {
            timestamp: (head.header().timestamp + self.config.poa_period_s).max(now_ms / 1000),
            sealer: me,
            difficulty: 1,
        };
        let assembled = assemble_block(
            head.header(),
            head.hash(),
            self.head_state(),
            self.mempool.pending(),
            &self.config,
            template,
        );
        let header = match poa_seal(&assembled.block.header, head.header(), &key, &self.config) {
            Ok(h) => h,
            Err(e) => {
                tracing::warn!(error = %e, "poa sealing failed");
                return;
            }
        };
        let block = SealedBlock::new(Block {
            header,
            transactions: assembled.block.transactions,
        });
        self.seen.put(block.hash(), ());
        if let ImportResult::Imported { .. } = self.import(now_ms, block, None, true, out) {
            self.stats.blocks_produced += 1;
        }
    }

    fn on_pow_solved(&mut self, now_ms: u64, job: u64, solution: PowSolution, out: &mut Vec<Output>) {
        match &self.mine_job {
            Some((id, _)) if *id == job => {}
            _ => return,
        }
        let (_, assembled) = self.mine_job.take().expect("checked");
        let mut header = assembled.block.header;
        header.seal = Seal::Pow {
            nonce: solution.nonce,
            mix: solution.mix,
        };
        let block = SealedBlock::new(Block {
            header,
            transactions: assembled.block.transactions,
        });
        self.seen.put(block.hash(), ());
        match self.import(now_ms, block, None, true, out) {
            ImportResult::Imported { .. } => self.stats.blocks_produced += 1,
            other => tracing::warn!(result = ?other, "mined block not imported"),
        }
    }
}

#[cfg(test)]
mod tests;
