//! Deterministic in-memory network of [`Node`]s on a virtual clock.
//!
//! Every source of randomness (link latency, PoW start nonces, sealer
//! jitter) derives from one seed, so a given seed always yields the same
//! event trace.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Genesis, SealedTx};
use crate::consensus::{pow_search, PowSolution};
use crate::crypto::{keccak256_concat, Digest32};

use super::{Input, NetMessage, Node, NodeError, Output, PeerId, Role, SubmitError, Timer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    FullMesh,
    /// 0 - 1 - 2 - ... - (n-1)
    Line,
    /// node 0 is the hub
    Star,
    Custom(Vec<(usize, usize)>),
}

impl Topology {
    pub fn edges(&self, n: usize) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = match self {
            Topology::FullMesh => (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect(),
            Topology::Line => (1..n).map(|b| (b - 1, b)).collect(),
            Topology::Star => (1..n).map(|b| (0, b)).collect(),
            Topology::Custom(list) => list
                .iter()
                .filter(|(a, b)| a != b && *a < n && *b < n)
                .map(|&(a, b)| (a.min(b), a.max(b)))
                .collect(),
        };
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// Uniform per-message link latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { min_ms: 1, max_ms: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    pub seed: u64,
    pub latency: LatencyModel,
    /// Virtual hashes per second of every PoW miner.
    pub hashrate: f64,
    /// Virtual start time; block timestamps derive from it.
    pub start_ms: u64,
    pub mempool_capacity: usize,
    /// Count deliveries per gossiped content hash.
    pub track_gossip: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            topology: Topology::FullMesh,
            seed: 0,
            latency: LatencyModel::default(),
            hashrate: 1000.0,
            start_ms: 0,
            mempool_capacity: super::DEFAULT_MEMPOOL_CAPACITY,
            track_gossip: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { to: usize, from: usize, msg: NetMessage },
    Timer { node: usize, timer: Timer },
    PowSolved { node: usize, job: u64, solution: PowSolution },
}

struct Scheduled {
    at: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on (at, seq)
        (o.at, o.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimStats {
    pub events: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delivered_by_kind: HashMap<&'static str, u64>,
    /// Deliveries per gossip content hash, when tracking is on.
    pub gossip_deliveries: HashMap<Digest32, u64>,
    pub pow_hashes: u64,
}

pub struct Sim {
    cfg: SimConfig,
    nodes: Vec<Node>,
    links: BTreeSet<(usize, usize)>,
    down: BTreeSet<(usize, usize)>,
    queue: BinaryHeap<Scheduled>,
    now_ms: u64,
    seq: u64,
    rng: ChaCha8Rng,
    trace: Digest32,
    stats: SimStats,
}

impl Sim {
    /// One node per role, wired per the topology and started at `cfg.start_ms`.
    pub fn new(genesis: &Genesis, roles: Vec<Role>, cfg: SimConfig) -> Result<Self, NodeError> {
        assert!(!roles.is_empty(), "a network needs at least one node");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut nodes = Vec::with_capacity(roles.len());
        for role in roles {
            nodes.push(Node::with_mempool(genesis.clone(), role, rng.gen(), cfg.mempool_capacity)?);
        }
        let links: BTreeSet<(usize, usize)> = cfg.topology.edges(nodes.len()).into_iter().collect();
        let mut sim = Sim {
            now_ms: cfg.start_ms,
            cfg,
            nodes,
            links,
            down: BTreeSet::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            rng,
            trace: Digest32::ZERO,
            stats: SimStats::default(),
        };
        let links: Vec<(usize, usize)> = sim.links.iter().copied().collect();
        for (a, b) in links {
            sim.connect(a, b);
        }
        for i in 0..sim.nodes.len() {
            let out = sim.nodes[i].start(sim.now_ms);
            sim.dispatch(i, out);
        }
        Ok(sim)
    }

    fn connect(&mut self, a: usize, b: usize) {
        let out = self.nodes[a].handle(self.now_ms, Input::PeerUp(b as PeerId));
        self.dispatch(a, out);
        let out = self.nodes[b].handle(self.now_ms, Input::PeerUp(a as PeerId));
        self.dispatch(b, out);
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> usize {
        self.links.len()
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    /// Running digest over every processed event.
    pub fn trace_digest(&self) -> Digest32 {
        self.trace
    }

    pub fn next_event_ms(&self) -> Option<u64> {
        self.queue.peek().map(|s| s.at)
    }

    fn schedule(&mut self, at: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
    }

    fn link_up(&self, a: usize, b: usize) -> bool {
        let k = (a.min(b), a.max(b));
        self.links.contains(&k) && !self.down.contains(&k)
    }

    fn dispatch(&mut self, origin: usize, outputs: Vec<Output>) {
        for o in outputs {
            match o {
                Output::Send { to, msg } => {
                    let to = to as usize;
                    let lat = self.rng.gen_range(self.cfg.latency.min_ms..=self.cfg.latency.max_ms);
                    self.schedule(self.now_ms + lat, Event::Deliver { to, from: origin, msg });
                }
                Output::SetTimer { at_ms, timer } => {
                    self.schedule(at_ms.max(self.now_ms), Event::Timer { node: origin, timer });
                }
                Output::Mine(job) => {
                    if self.cfg.hashrate <= 0.0 {
                        continue;
                    }
                    let start: u64 = self.rng.gen();
                    let solution = pow_search(&job.header.seal_hash(), job.header.difficulty, start, u64::MAX)
                        .expect("difficulty validated")
                        .expect("unbounded search");
                    self.stats.pow_hashes += solution.attempts;
                    let dt = ((solution.attempts as f64 / self.cfg.hashrate) * 1000.0).ceil() as u64;
                    self.schedule(
                        self.now_ms + dt.max(1),
                        Event::PowSolved {
                            node: origin,
                            job: job.id,
                            solution,
                        },
                    );
                }
                Output::Disconnect(peer) => {
                    let k = (origin.min(peer as usize), origin.max(peer as usize));
                    self.down.insert(k);
                }
            }
        }
    }

    /// Processes the next event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(s) = self.queue.pop() else {
            return false;
        };
        self.now_ms = self.now_ms.max(s.at);
        self.stats.events += 1;
        let (target, tag): (usize, u8) = match &s.event {
            Event::Deliver { to, .. } => (*to, 0),
            Event::Timer { node, .. } => (*node, 1),
            Event::PowSolved { node, .. } => (*node, 2),
        };
        self.trace = keccak256_concat(&[
            &self.trace.0,
            &s.at.to_be_bytes(),
            &s.seq.to_be_bytes(),
            &(target as u64).to_be_bytes(),
            &[tag],
        ]);
        let out = match s.event {
            Event::Deliver { to, from, msg } => {
                if !self.link_up(from, to) {
                    self.stats.dropped += 1;
                    return true;
                }
                self.stats.delivered += 1;
                *self.stats.delivered_by_kind.entry(msg.kind()).or_default() += 1;
                if self.cfg.track_gossip {
                    if let Some(id) = msg.gossip_id() {
                        *self.stats.gossip_deliveries.entry(id).or_default() += 1;
                    }
                }
                self.nodes[to].handle(
                    self.now_ms,
                    Input::Message {
                        from: from as PeerId,
                        msg,
                    },
                )
            }
            Event::Timer { node, timer } => self.nodes[node].handle(self.now_ms, Input::Timer(timer)),
            Event::PowSolved { node, job, solution } => {
                self.nodes[node].handle(self.now_ms, Input::PowSolved { job, solution })
            }
        };
        self.dispatch(target, out);
        true
    }

    /// Processes every event due at or before `t_ms`, then sets the clock to `t_ms`.
    pub fn run_until(&mut self, t_ms: u64) {
        while self.queue.peek().is_some_and(|s| s.at <= t_ms) {
            self.step();
        }
        self.now_ms = self.now_ms.max(t_ms);
    }

    /// Steps until `pred` holds or `deadline_ms` passes. Returns whether `pred` held.
    pub fn run_until_pred(&mut self, deadline_ms: u64, mut pred: impl FnMut(&Sim) -> bool) -> bool {
        loop {
            if pred(self) {
                return true;
            }
            match self.next_event_ms() {
                Some(t) if t <= deadline_ms => {
                    self.step();
                }
                _ => {
                    self.now_ms = self.now_ms.max(deadline_ms);
                    return pred(self);
                }
            }
        }
    }

    pub fn run_for(&mut self, dt_ms: u64) {
        self.run_until(self.now_ms + dt_ms);
    }

    /// Submits a transaction to node `i` at the current virtual time.
    pub fn submit_tx(&mut self, i: usize, tx: SealedTx) -> Result<Digest32, SubmitError> {
        let (r, out) = self.nodes[i].submit_tx(self.now_ms, tx);
        self.dispatch(i, out);
        r
    }

    pub fn set_producing(&mut self, i: usize, on: bool) {
        let out = self.nodes[i].set_producing(self.now_ms, on);
        self.dispatch(i, out);
    }

    /// Stops all production and drains in-flight messages.
    pub fn quiesce(&mut self) {
        for i in 0..self.nodes.len() {
            self.set_producing(i, false);
        }
        while self.step() {}
    }

    /// Cuts every link between different groups. Nodes absent from all
    /// groups keep their links.
    pub fn partition(&mut self, groups: &[Vec<usize>]) {
        let group_of: HashMap<usize, usize> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, members)| members.iter().map(move |m| (*m, g)))
            .collect();
        let links: Vec<(usize, usize)> = self.links.iter().copied().collect();
        for (a, b) in links {
            if let (Some(ga), Some(gb)) = (group_of.get(&a), group_of.get(&b)) {
                if ga != gb && self.down.insert((a, b)) {
                    let out = self.nodes[a].handle(self.now_ms, Input::PeerDown(b as PeerId));
                    self.dispatch(a, out);
                    let out = self.nodes[b].handle(self.now_ms, Input::PeerDown(a as PeerId));
                    self.dispatch(b, out);
                }
            }
        }
    }

    /// Restores every cut link; reconnecting peers exchange status and sync.
    pub fn heal(&mut self) {
        let cut: Vec<(usize, usize)> = std::mem::take(&mut self.down).into_iter().collect();
        for (a, b) in cut {
            self.connect(a, b);
        }
    }

    /// True when every node reports the same head.
    pub fn converged(&self) -> bool {
        let h = self.nodes[0].head_hash();
        self.nodes.iter().all(|n| n.head_hash() == h)
    }

    /// Length of the longest prefix shared by all canonical chains.
    pub fn common_prefix_len(&self) -> usize {
        let min = self.nodes.iter().map(|n| n.canonical_hashes().len()).min().unwrap_or(0);
        (0..min)
            .take_while(|&i| {
                let h = self.nodes[0].canonical_hashes()[i];
                self.nodes.iter().all(|n| n.canonical_hashes()[i] == h)
            })
            .count()
    }
}
