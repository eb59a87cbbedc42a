//! Write throughput: TPS = n_t / t_t, where t_t runs from the first
//! submission to the moment the observing node imports the block holding
//! the last transaction.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainConfig, ConsensusKind, Genesis, SealedTx, TxRequest, DEFAULT_POA_PERIOD_S};
use crate::crypto::{Address, Digest32, KeyPair};
use crate::consensus::pow_equilibrium_difficulty;
use crate::node::sim::{LatencyModel, Sim, SimConfig, Topology};
use crate::node::{NodeError, Role};

use super::{mean, stddev};

#[derive(Debug, Error)]
pub enum StressError {
    #[error("n_tx must be at least 1")]
    EmptyWorkload,
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("transaction {index} ({hash}) rejected: {cause}")]
    Rejected {
        index: usize,
        hash: Digest32,
        cause: String,
    },
    #[error("network stalled: {0}")]
    Stalled(String),
    #[error("transaction {0} included more than once")]
    DuplicateInclusion(Digest32),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("transport: {0}")]
    Transport(String),
}

/// One measured run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressRun {
    pub repeat: usize,
    pub n_tx: usize,
    /// Milliseconds on the run's clock (virtual for simulations).
    pub first_submit_ms: f64,
    pub last_inclusion_ms: f64,
    pub t_t_s: f64,
    /// Transaction counts of every block imported during the run, in chain order.
    pub block_tx_counts: Vec<usize>,
    pub tx_hashes: Vec<Digest32>,
}

impl StressRun {
    pub fn tps(&self) -> f64 {
        self.n_tx as f64 / self.t_t_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub consensus: ConsensusKind,
    pub gas_limit: u64,
    pub n_tx: usize,
    /// Mean t_t over all repeats.
    pub t_t_s: f64,
    /// `n_tx / t_t_s`.
    pub tps: f64,
    pub repeats: usize,
    /// Standard deviation of the per-run TPS.
    pub tps_stddev: f64,
    #[serde(skip)]
    pub runs: Vec<StressRun>,
}

impl StressReport {
    pub fn from_runs(consensus: ConsensusKind, gas_limit: u64, n_tx: usize, runs: Vec<StressRun>) -> Self {
        let tts: Vec<f64> = runs.iter().map(|r| r.t_t_s).collect();
        let tpss: Vec<f64> = runs.iter().map(|r| r.tps()).collect();
        let t_t_s = mean(&tts);
        StressReport {
            consensus,
            gas_limit,
            n_tx,
            t_t_s,
            tps: n_tx as f64 / t_t_s,
            repeats: runs.len(),
            tps_stddev: stddev(&tpss),
            runs,
        }
    }

    /// Largest number of transactions seen in one block across all runs.
    pub fn max_block_txs(&self) -> usize {
        self.runs
            .iter()
            .flat_map(|r| r.block_tx_counts.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Something that can run the write workload repeatedly.
pub trait StressTarget {
    fn consensus(&self) -> ConsensusKind;
    fn gas_limit(&self) -> u64;
    fn run(&mut self, n_tx: usize, batch_size: usize, repeat: usize) -> Result<StressRun, StressError>;
}

/// Builds a fresh network per configuration.
pub trait NetworkFactory {
    type Target: StressTarget;
    fn build(&self, consensus: ConsensusKind, gas_limit: u64) -> Result<Self::Target, StressError>;
}

pub fn stress_write<T: StressTarget + ?Sized>(
    target: &mut T,
    n_tx: usize,
    batch_size: usize,
    repeats: usize,
) -> Result<StressReport, StressError> {
    if n_tx == 0 {
        return Err(StressError::EmptyWorkload);
    }
    if batch_size == 0 {
        return Err(StressError::EmptyBatch);
    }
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats.max(1) {
        runs.push(target.run(n_tx, batch_size, r)?);
    }
    Ok(StressReport::from_runs(target.consensus(), target.gas_limit(), n_tx, runs))
}

/// One report per gas limit, in the order given, each on a fresh network.
pub fn gas_sweep<F: NetworkFactory>(
    factory: &F,
    consensus: ConsensusKind,
    limits: &[u64],
    n_tx: usize,
    repeats: usize,
) -> Result<Vec<StressReport>, StressError> {
    limits
        .iter()
        .map(|&limit| {
            let mut t = factory.build(consensus, limit)?;
            stress_write(&mut t, n_tx, 1, repeats)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub n_tx: usize,
    pub left: StressReport,
    pub right: StressReport,
    /// `right.tps / left.tps`
    pub ratio: f64,
}

/// Paired reports for two consensus kinds at every workload size.
pub fn consensus_compare<F: NetworkFactory>(
    factory: &F,
    pair: (ConsensusKind, ConsensusKind),
    n_list: &[usize],
    gas_limit: u64,
    repeats: usize,
) -> Result<Vec<ComparePoint>, StressError> {
    let mut left = factory.build(pair.0, gas_limit)?;
    let mut right = factory.build(pair.1, gas_limit)?;
    n_list
        .iter()
        .map(|&n| {
            let l = stress_write(&mut left, n, 1, repeats)?;
            let r = stress_write(&mut right, n, 1, repeats)?;
            Ok(ComparePoint {
                n_tx: n,
                ratio: r.tps / l.tps,
                left: l,
                right: r,
            })
        })
        .collect()
}

pub fn workload_senders(n: usize) -> Vec<KeyPair> {
    (0..n as u64).map(|i| KeyPair::dev("bench-sender", i)).collect()
}

/// Deterministic pre-signed transfers, round-robin over `senders`
/// starting at the given per-sender nonces.
pub fn transfer_workload(chain_id: u64, n_tx: usize, senders: &[KeyPair], base_nonces: &[u64]) -> Vec<SealedTx> {
    let recipients: Vec<Address> = (0..7).map(|i| KeyPair::dev("bench-recipient", i).address()).collect();
    (0..n_tx)
        .map(|i| {
            let s = i % senders.len();
            let nonce = base_nonces.get(s).copied().unwrap_or(0) + (i / senders.len()) as u64;
            TxRequest::transfer(senders[s].address(), nonce, recipients[i % recipients.len()], 1)
                .sign(&senders[s], chain_id)
        })
        .collect()
}

/// Shape of a simulated benchmark network.
#[derive(Debug, Clone)]
pub struct SimNetworkSpec {
    pub chain_id: u64,
    pub n_nodes: usize,
    /// Sealers (PoA) or miners (PoW); they are the last nodes. Node 0 is
    /// the observer the client talks to.
    pub n_producers: usize,
    pub period_s: u64,
    pub hashrate_per_miner: f64,
    pub warmup_blocks: u64,
    /// Client round trip per submission.
    pub rpc_rtt_ms: u64,
    pub latency: LatencyModel,
    pub topology: Topology,
    pub base_seed: u64,
    pub n_senders: usize,
    /// Virtual time budget per run.
    pub deadline_ms: u64,
}

impl Default for SimNetworkSpec {
    fn default() -> Self {
        SimNetworkSpec {
            chain_id: 1337,
            n_nodes: 16,
            n_producers: 4,
            period_s: DEFAULT_POA_PERIOD_S,
            hashrate_per_miner: 250.0,
            warmup_blocks: 10,
            rpc_rtt_ms: 1,
            latency: LatencyModel::default(),
            topology: Topology::FullMesh,
            base_seed: 1,
            n_senders: 10,
            deadline_ms: 3_600_000,
        }
    }
}

impl SimNetworkSpec {
    pub fn genesis(&self, consensus: ConsensusKind, gas_limit: u64) -> Genesis {
        let mut config = match consensus {
            ConsensusKind::PoA => ChainConfig::poa(
                self.chain_id,
                (0..self.n_producers as u64).map(|i| KeyPair::dev("sealer", i).address()).collect(),
            ),
            ConsensusKind::PoW => {
                // start at the retarget fixed point so the interval is stationary
                let d = pow_equilibrium_difficulty(self.n_producers as f64 * self.hashrate_per_miner, self.period_s);
                ChainConfig::pow(self.chain_id, d, self.period_s)
            }
        };
        config.block_gas_limit = gas_limit;
        config.poa_period_s = self.period_s;
        Genesis {
            config,
            timestamp: 0,
            alloc: workload_senders(self.n_senders)
                .iter()
                .map(|k| (k.address(), u64::MAX / 1024))
                .collect(),
        }
    }

    pub fn roles(&self, consensus: ConsensusKind) -> Vec<Role> {
        let observers = self.n_nodes.saturating_sub(self.n_producers);
        let mut roles = vec![Role::Observer; observers];
        for i in 0..self.n_producers as u64 {
            roles.push(match consensus {
                ConsensusKind::PoA => Role::Sealer(KeyPair::dev("sealer", i)),
                ConsensusKind::PoW => Role::Miner(KeyPair::dev("miner", i).address()),
            });
        }
        roles
    }

    pub fn seed(&self, repeat: usize) -> u64 {
        self.base_seed.wrapping_mul(1_000_003).wrapping_add(repeat as u64)
    }

    pub fn build_sim(&self, consensus: ConsensusKind, gas_limit: u64, seed: u64) -> Result<Sim, NodeError> {
        let cfg = SimConfig {
            topology: self.topology.clone(),
            seed,
            latency: self.latency,
            hashrate: self.hashrate_per_miner,
            ..SimConfig::default()
        };
        Sim::new(&self.genesis(consensus, gas_limit), self.roles(consensus), cfg)
    }
}

/// The simulated network as a stress target. Each run starts from genesis.
pub struct SimNetwork {
    pub spec: SimNetworkSpec,
    consensus: ConsensusKind,
    gas_limit: u64,
    workloads: HashMap<usize, Vec<SealedTx>>,
    /// Keep the final simulator of the last run for inspection.
    pub keep_last: bool,
    pub last_sim: Option<Sim>,
}

impl SimNetwork {
    pub fn new(spec: SimNetworkSpec, consensus: ConsensusKind, gas_limit: u64) -> Self {
        SimNetwork {
            spec,
            consensus,
            gas_limit,
            workloads: HashMap::new(),
            keep_last: false,
            last_sim: None,
        }
    }
}

impl NetworkFactory for SimNetworkSpec {
    type Target = SimNetwork;
    fn build(&self, consensus: ConsensusKind, gas_limit: u64) -> Result<SimNetwork, StressError> {
        Ok(SimNetwork::new(self.clone(), consensus, gas_limit))
    }
}

impl StressTarget for SimNetwork {
    fn consensus(&self) -> ConsensusKind {
        self.consensus
    }

    fn gas_limit(&self) -> u64 {
        self.gas_limit
    }

    fn run(&mut self, n_tx: usize, batch_size: usize, repeat: usize) -> Result<StressRun, StressError> {
        let spec = &self.spec;
        let txs = self
            .workloads
            .entry(n_tx)
            .or_insert_with(|| transfer_workload(spec.chain_id, n_tx, &workload_senders(spec.n_senders), &[]))
            .clone();
        let seed = spec.seed(repeat);
        let mut sim = spec.build_sim(self.consensus, self.gas_limit, seed)?;
        let deadline = spec.deadline_ms;
        if !sim.run_until_pred(deadline, |s| s.node(0).head_number() >= spec.warmup_blocks) {
            return Err(StressError::Stalled(format!("warm-up did not reach block {}", spec.warmup_blocks)));
        }
        // start at a random phase of the block period
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        sim.run_for(rng.gen_range(0..spec.period_s * 1000));
        let start_number = sim.node(0).head_number();

        let first_submit = sim.now_ms();
        let mut next_submit = first_submit;
        let mut chunks = txs.chunks(batch_size).enumerate().peekable();
        let mut outstanding: HashSet<Digest32> = HashSet::with_capacity(n_tx);
        let mut submitted = 0usize;
        let mut head = sim.node(0).head_hash();
        let last_inclusion;
        loop {
            if chunks.peek().is_some() && sim.next_event_ms().is_none_or(|t| t > next_submit) {
                sim.run_until(next_submit);
                let (ci, chunk) = chunks.next().expect("peeked");
                for (j, tx) in chunk.iter().enumerate() {
                    match sim.submit_tx(0, tx.clone()) {
                        Ok(h) => {
                            outstanding.insert(h);
                        }
                        Err(e) => {
                            return Err(StressError::Rejected {
                                index: ci * batch_size + j,
                                hash: tx.hash(),
                                cause: e.to_string(),
                            })
                        }
                    }
                }
                submitted += chunk.len();
                next_submit += spec.rpc_rtt_ms;
            } else if !sim.step() {
                return Err(StressError::Stalled("event queue drained".into()));
            }
            if sim.node(0).head_hash() != head {
                head = sim.node(0).head_hash();
                let node = sim.node(0);
                outstanding.retain(|h| node.receipt(h).is_none());
                if submitted == n_tx && outstanding.is_empty() {
                    last_inclusion = sim.now_ms();
                    break;
                }
            }
            if sim.now_ms() > first_submit + deadline {
                return Err(StressError::Stalled(format!("{} transactions not included", outstanding.len())));
            }
        }

        let node = sim.node(0);
        let mut seen = HashSet::with_capacity(n_tx);
        let mut block_tx_counts = Vec::new();
        for n in start_number + 1..=node.head_number() {
            let b = node.block_by_number(n).expect("canonical");
            block_tx_counts.push(b.transactions().len());
            for tx in b.transactions() {
                if !seen.insert(tx.hash()) {
                    return Err(StressError::DuplicateInclusion(tx.hash()));
                }
            }
        }
        let run = StressRun {
            repeat,
            n_tx,
            first_submit_ms: first_submit as f64,
            last_inclusion_ms: last_inclusion as f64,
            t_t_s: (last_inclusion - first_submit) as f64 / 1000.0,
            block_tx_counts,
            tx_hashes: txs.iter().map(|t| t.hash()).collect(),
        };
        if self.keep_last {
            self.last_sim = Some(sim);
        }
        Ok(run)
    }
}
