//! Single-node development networks written to disk: a genesis, a node
//! config and an admin key file, ready for `bench node`.

use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, ConsensusKind, Genesis, DEFAULT_BLOCK_GAS_LIMIT, DEFAULT_POA_PERIOD_S};
use crate::crypto::KeyPair;
use crate::node::runtime::{NodeConfig, RoleConfig};

use super::stress::workload_senders;

pub const GENESIS_FILE: &str = "genesis.json";
pub const NODE_FILE: &str = "node.json";
pub const ADMIN_KEY_FILE: &str = "admin.key";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevnetSpec {
    pub chain_id: u64,
    pub consensus: ConsensusKind,
    pub gas_limit: u64,
    /// PoA period, or PoW target interval.
    pub period_s: u64,
    /// Required for PoW; see [`crate::node::runtime::calibrated_difficulty`].
    pub pow_difficulty: Option<u64>,
    pub n_senders: usize,
}

impl Default for DevnetSpec {
    fn default() -> Self {
        DevnetSpec {
            chain_id: 1337,
            consensus: ConsensusKind::PoA,
            gas_limit: DEFAULT_BLOCK_GAS_LIMIT,
            period_s: DEFAULT_POA_PERIOD_S,
            pow_difficulty: None,
            n_senders: 10,
        }
    }
}

pub fn devnet_sealer() -> KeyPair {
    KeyPair::dev("devnet-sealer", 0)
}

pub fn devnet_admin() -> KeyPair {
    KeyPair::dev("devnet-admin", 0)
}

impl DevnetSpec {
    pub fn genesis(&self) -> Genesis {
        let mut config = match self.consensus {
            ConsensusKind::PoA => ChainConfig::poa(self.chain_id, vec![devnet_sealer().address()]),
            ConsensusKind::PoW => ChainConfig::pow(self.chain_id, self.pow_difficulty.unwrap_or(1).max(1), self.period_s),
        };
        config.block_gas_limit = self.gas_limit;
        config.poa_period_s = self.period_s;
        let mut alloc: std::collections::BTreeMap<_, _> = workload_senders(self.n_senders)
            .iter()
            .map(|k| (k.address(), u64::MAX / 1024))
            .collect();
        alloc.insert(devnet_admin().address(), 1 << 50);
        Genesis {
            config,
            timestamp: 0,
            alloc,
        }
    }

    pub fn role(&self) -> RoleConfig {
        match self.consensus {
            ConsensusKind::PoA => RoleConfig::Sealer {
                secret_key: hex::encode(devnet_sealer().secret_bytes()),
            },
            ConsensusKind::PoW => RoleConfig::Miner {
                coinbase: KeyPair::dev("devnet-miner", 0).address(),
            },
        }
    }

    /// Writes the three files into `dir` and returns the node config path.
    pub fn write(&self, dir: &Path, listen: SocketAddr) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(GENESIS_FILE), &self.genesis())?;
        let node = NodeConfig {
            genesis: PathBuf::from(GENESIS_FILE),
            role: self.role(),
            listen,
            peers: Vec::new(),
            data_dir: Some(PathBuf::from("chain")),
            seed: 0,
        };
        let path = dir.join(NODE_FILE);
        write_json(&path, &node)?;
        std::fs::write(dir.join(ADMIN_KEY_FILE), hex::encode(devnet_admin().secret_bytes()))?;
        Ok(path)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v).map_err(io::Error::other)?)
}
