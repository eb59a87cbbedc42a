//! On-disk chain: every imported block appended to `blocks.jsonl`, plus a
//! state snapshot of the canonical head every [`SNAPSHOT_EVERY`] blocks.
//! Restart restores the snapshot prefix without execution and replays the tail.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{AccountState, ChainState, SealedBlock};
use crate::crypto::{to_canonical_json, Address, Digest32};
use crate::registry::{RegistryEntry, RegistryState};

use super::{ImportResult, Node};

pub const SNAPSHOT_EVERY: u64 = 64;
const BLOCKS_FILE: &str = "blocks.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file} line {line}: {reason}")]
    Corrupt { file: String, line: usize, reason: String },
    #[error("snapshot does not match the stored chain: {0}")]
    SnapshotMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub number: u64,
    pub hash: Digest32,
    /// Canonical hashes from genesis through `hash`.
    pub canonical: Vec<Digest32>,
    pub accounts: BTreeMap<Address, AccountState>,
    pub registry: Vec<RegistryEntry>,
}

impl StateSnapshot {
    pub fn capture(node: &Node) -> Self {
        let state = node.head_state();
        StateSnapshot {
            number: node.head_number(),
            hash: node.head_hash(),
            canonical: node.canonical_hashes().to_vec(),
            accounts: state.accounts.iter().map(|(a, s)| (*a, *s)).collect(),
            registry: state.registry.snapshot(),
        }
    }

    pub fn state(&self) -> ChainState {
        ChainState {
            accounts: self.accounts.iter().map(|(a, s)| (*a, *s)).collect(),
            registry: RegistryState::from_snapshot(&self.registry),
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct RestoreStats {
    pub restored: usize,
    pub replayed: usize,
    pub dropped: usize,
}

pub struct ChainStore {
    dir: PathBuf,
    blocks: BufWriter<File>,
    last_snapshot: u64,
}

impl ChainStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let file = OpenOptions::new().create(true).append(true).open(dir.join(BLOCKS_FILE))?;
        let last_snapshot = read_snapshot(&dir)?.map_or(0, |s| s.number);
        Ok(ChainStore {
            dir,
            blocks: BufWriter::new(file),
            last_snapshot,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Loads the stored chain into a freshly constructed `node`.
    pub fn restore(&self, node: &mut Node, now_ms: u64) -> Result<RestoreStats, StoreError> {
        let blocks = read_blocks(&self.dir)?;
        let mut stats = RestoreStats::default();
        let mut done: HashMap<Digest32, ()> = HashMap::new();
        if let Some(snap) = read_snapshot(&self.dir)? {
            if snap.canonical.first() != Some(&node.genesis_hash()) {
                return Err(StoreError::SnapshotMismatch("different genesis".into()));
            }
            let by_hash: HashMap<Digest32, &SealedBlock> = blocks.iter().map(|b| (b.hash(), b)).collect();
            for h in &snap.canonical[1..] {
                let b = by_hash
                    .get(h)
                    .ok_or_else(|| StoreError::SnapshotMismatch(format!("missing block {h}")))?;
                if !node.restore_trusted((*b).clone(), None) {
                    return Err(StoreError::SnapshotMismatch(format!("block {h} does not extend the chain")));
                }
                done.insert(*h, ());
                stats.restored += 1;
            }
            node.restore_head_state(snap.state());
        }
        for b in blocks {
            if done.contains_key(&b.hash()) {
                continue;
            }
            match node.import_block(now_ms, b).0 {
                ImportResult::Imported { .. } | ImportResult::Known => stats.replayed += 1,
                _ => stats.dropped += 1,
            }
        }
        node.drain_imported();
        Ok(stats)
    }

    pub fn append(&mut self, blocks: &[SealedBlock]) -> Result<(), StoreError> {
        for b in blocks {
            let line = to_canonical_json(b).map_err(|e| StoreError::Corrupt {
                file: BLOCKS_FILE.into(),
                line: 0,
                reason: e.to_string(),
            })?;
            self.blocks.write_all(&line)?;
            self.blocks.write_all(b"\n")?;
        }
        self.blocks.flush()?;
        Ok(())
    }

    /// Writes a snapshot when the head has advanced past the next multiple of [`SNAPSHOT_EVERY`].
    pub fn maybe_snapshot(&mut self, node: &Node) -> Result<bool, StoreError> {
        let n = node.head_number();
        if n < self.last_snapshot + SNAPSHOT_EVERY {
            return Ok(false);
        }
        self.blocks.flush()?;
        let snap = StateSnapshot::capture(node);
        let tmp = self.dir.join("snapshot.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&snap).expect("snapshot serializes"))?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.last_snapshot = n;
        Ok(true)
    }
}

fn read_snapshot(dir: &Path) -> Result<Option<StateSnapshot>, StoreError> {
    let path = dir.join(SNAPSHOT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path)?;
    serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
        file: SNAPSHOT_FILE.into(),
        line: 1,
        reason: e.to_string(),
    })
}

fn read_blocks(dir: &Path) -> Result<Vec<SealedBlock>, StoreError> {
    let path = dir.join(BLOCKS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.len();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(b) => out.push(b),
            // a torn final line from a crash is dropped
            Err(_) if i + 1 == last => break,
            Err(e) => {
                return Err(StoreError::Corrupt {
                    file: BLOCKS_FILE.into(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}
