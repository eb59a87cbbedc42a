//! Ledger types, gas accounting and the state-transition function.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

use crate::crypto::{
    canonical_json, keccak256, recover_address, to_canonical_json, Address, Digest32, KeyPair,
    Signature,
};
use crate::registry::RegistryState;

pub const TX_BASE_GAS: u64 = 21_000;
pub const GAS_PER_STORED_HASH: u64 = 20_000;
pub const DEFAULT_BLOCK_GAS_LIMIT: u64 = 1_000_000;
pub const DEFAULT_POA_PERIOD_S: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Transfer,
    RegistryStore,
    RegistryStoreBatch,
}

/// Fields of a transaction before signing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRequest {
    pub nonce: u64,
    pub from: Address,
    pub kind: TxKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Address>,
    #[serde(default)]
    pub value: u64,
    #[serde(default)]
    pub payload: Vec<Digest32>,
    pub gas_limit: u64,
}

impl TxRequest {
    pub fn transfer(from: Address, nonce: u64, to: Address, value: u64) -> Self {
        TxRequest {
            nonce,
            from,
            kind: TxKind::Transfer,
            to: Some(to),
            value,
            payload: Vec::new(),
            gas_limit: TX_BASE_GAS,
        }
    }

    pub fn store(from: Address, nonce: u64, hash: Digest32) -> Self {
        let mut req = TxRequest {
            nonce,
            from,
            kind: TxKind::RegistryStore,
            to: None,
            value: 0,
            payload: vec![hash],
            gas_limit: 0,
        };
        req.gas_limit = req.intrinsic_gas();
        req
    }

    pub fn store_batch(from: Address, nonce: u64, hashes: Vec<Digest32>) -> Self {
        let mut req = TxRequest {
            nonce,
            from,
            kind: TxKind::RegistryStoreBatch,
            to: None,
            value: 0,
            payload: hashes,
            gas_limit: 0,
        };
        req.gas_limit = req.intrinsic_gas();
        req
    }

    pub fn intrinsic_gas(&self) -> u64 {
        match self.kind {
            TxKind::Transfer => TX_BASE_GAS,
            TxKind::RegistryStore | TxKind::RegistryStoreBatch => {
                TX_BASE_GAS + GAS_PER_STORED_HASH * self.payload.len() as u64
            }
        }
    }

    /// Digest signed by the sender; mixes in `chain_id` against cross-chain replay.
    pub fn sighash(&self, chain_id: u64) -> Digest32 {
        let mut v = serde_json::to_value(self).expect("tx request serializes");
        v.as_object_mut()
            .expect("object")
            .insert("chain_id".into(), json!(chain_id));
        keccak256(&canonical_json(&v))
    }

    pub fn sign(self, key: &KeyPair, chain_id: u64) -> SealedTx {
        let signature = key.sign(&self.sighash(chain_id));
        SealedTx::new(Transaction {
            request: self,
            signature,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    #[serde(flatten)]
    pub request: TxRequest,
    pub signature: Signature,
}

impl Deref for Transaction {
    type Target = TxRequest;
    fn deref(&self) -> &TxRequest {
        &self.request
    }
}

pub fn tx_sighash(tx: &Transaction, chain_id: u64) -> Digest32 {
    tx.request.sighash(chain_id)
}

pub fn intrinsic_gas(tx: &Transaction) -> u64 {
    tx.request.intrinsic_gas()
}

/// A transaction paired with its hash, computed once.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedTx {
    tx: Transaction,
    hash: Digest32,
}

impl SealedTx {
    pub fn new(tx: Transaction) -> Self {
        let hash = keccak256(&to_canonical_json(&tx).expect("tx serializes"));
        SealedTx { tx, hash }
    }

    pub fn hash(&self) -> Digest32 {
        self.hash
    }

    pub fn tx(&self) -> &Transaction {
        &self.tx
    }

    pub fn into_inner(self) -> Transaction {
        self.tx
    }
}

impl Deref for SealedTx {
    type Target = Transaction;
    fn deref(&self) -> &Transaction {
        &self.tx
    }
}

impl fmt::Debug for SealedTx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealedTx")
            .field("hash", &self.hash)
            .field("from", &self.tx.from)
            .field("nonce", &self.tx.nonce)
            .field("kind", &self.tx.kind)
            .finish()
    }
}

impl Serialize for SealedTx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tx.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SealedTx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(SealedTx::new(Transaction::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    OutOfGas,
    Reverted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Digest32,
    pub block_hash: Digest32,
    pub block_number: u64,
    pub status: TxStatus,
    pub gas_used: u64,
}

/// Result of executing one transaction, before the block hash is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOutcome {
    pub tx_hash: Digest32,
    pub status: TxStatus,
    pub gas_used: u64,
}

impl ExecOutcome {
    pub fn into_receipt(self, block_hash: Digest32, block_number: u64) -> Receipt {
        Receipt {
            tx_hash: self.tx_hash,
            block_hash,
            block_number,
            status: self.status,
            gas_used: self.gas_used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusKind {
    #[serde(rename = "pow")]
    PoW,
    #[serde(rename = "poa")]
    PoA,
}

impl fmt::Display for ConsensusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsensusKind::PoW => f.write_str("PoW"),
            ConsensusKind::PoA => f.write_str("PoA"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chain_id: u64,
    pub consensus: ConsensusKind,
    #[serde(default = "default_gas_limit")]
    pub block_gas_limit: u64,
    #[serde(default)]
    pub poa_sealers: Vec<Address>,
    #[serde(default = "default_period")]
    pub poa_period_s: u64,
    #[serde(default = "default_pow_difficulty")]
    pub pow_initial_difficulty: u64,
    #[serde(default = "default_pow_target")]
    pub pow_target_block_s: u64,
}

fn default_gas_limit() -> u64 {
    DEFAULT_BLOCK_GAS_LIMIT
}
fn default_period() -> u64 {
    DEFAULT_POA_PERIOD_S
}
fn default_pow_difficulty() -> u64 {
    1 << 20
}
fn default_pow_target() -> u64 {
    DEFAULT_POA_PERIOD_S
}

impl ChainConfig {
    pub fn poa(chain_id: u64, sealers: Vec<Address>) -> Self {
        ChainConfig {
            chain_id,
            consensus: ConsensusKind::PoA,
            block_gas_limit: DEFAULT_BLOCK_GAS_LIMIT,
            poa_sealers: sealers,
            poa_period_s: DEFAULT_POA_PERIOD_S,
            pow_initial_difficulty: default_pow_difficulty(),
            pow_target_block_s: default_pow_target(),
        }
    }

    pub fn pow(chain_id: u64, initial_difficulty: u64, target_block_s: u64) -> Self {
        ChainConfig {
            chain_id,
            consensus: ConsensusKind::PoW,
            block_gas_limit: DEFAULT_BLOCK_GAS_LIMIT,
            poa_sealers: Vec::new(),
            poa_period_s: DEFAULT_POA_PERIOD_S,
            pow_initial_difficulty: initial_difficulty,
            pow_target_block_s: target_block_s,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.consensus == ConsensusKind::PoA && self.poa_sealers.is_empty() {
            return Err("poa_sealers must be non-empty for PoA".into());
        }
        if self.block_gas_limit < TX_BASE_GAS + GAS_PER_STORED_HASH {
            return Err(format!(
                "block_gas_limit {} cannot fit a single store transaction",
                self.block_gas_limit
            ));
        }
        if self.consensus == ConsensusKind::PoW
            && (self.pow_initial_difficulty == 0 || self.pow_target_block_s == 0)
        {
            return Err("PoW difficulty and target block time must be >= 1".into());
        }
        Ok(())
    }

    /// Largest number of hashes a single store transaction can carry.
    pub fn max_hashes_per_tx(&self) -> usize {
        (self.block_gas_limit.saturating_sub(TX_BASE_GAS) / GAS_PER_STORED_HASH) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Seal {
    None,
    Pow { nonce: u64, mix: Digest32 },
    Poa { signature: Signature },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub number: u64,
    pub parent_hash: Digest32,
    pub timestamp: u64,
    pub gas_limit: u64,
    pub gas_used: u64,
    pub tx_root: Digest32,
    pub sealer: Address,
    pub difficulty: u64,
    pub seal: Seal,
}

#[derive(Serialize, Deserialize)]
struct HeaderWire {
    number: u64,
    parent_hash: Digest32,
    timestamp: u64,
    gas_limit: u64,
    gas_used: u64,
    tx_root: Digest32,
    sealer: Address,
    difficulty: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pow_nonce: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pow_mix: Option<Digest32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poa_sig: Option<Signature>,
}

impl BlockHeader {
    fn to_wire(&self, with_seal: bool) -> HeaderWire {
        let mut w = HeaderWire {
            number: self.number,
            parent_hash: self.parent_hash,
            timestamp: self.timestamp,
            gas_limit: self.gas_limit,
            gas_used: self.gas_used,
            tx_root: self.tx_root,
            sealer: self.sealer,
            difficulty: self.difficulty,
            pow_nonce: None,
            pow_mix: None,
            poa_sig: None,
        };
        if with_seal {
            match self.seal {
                Seal::None => {}
                Seal::Pow { nonce, mix } => {
                    w.pow_nonce = Some(format!("0x{nonce:016x}"));
                    w.pow_mix = Some(mix);
                }
                Seal::Poa { signature } => w.poa_sig = Some(signature),
            }
        }
        w
    }

    /// Hash of the full header including the seal.
    pub fn hash(&self) -> Digest32 {
        keccak256(&to_canonical_json(&self.to_wire(true)).expect("header serializes"))
    }

    /// Hash of the header without its seal: what sealers sign or mine over.
    pub fn seal_hash(&self) -> Digest32 {
        keccak256(&to_canonical_json(&self.to_wire(false)).expect("header serializes"))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_json(&self.to_wire(true)).expect("header serializes")
    }
}

impl Serialize for BlockHeader {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_wire(true).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockHeader {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = HeaderWire::deserialize(d)?;
        let seal = match (w.pow_nonce, w.pow_mix, w.poa_sig) {
            (None, None, None) => Seal::None,
            (Some(n), Some(mix), None) => {
                let body = n.strip_prefix("0x").unwrap_or(&n);
                let nonce = u64::from_str_radix(body, 16).map_err(D::Error::custom)?;
                Seal::Pow { nonce, mix }
            }
            (None, None, Some(signature)) => Seal::Poa { signature },
            _ => return Err(D::Error::custom("inconsistent seal fields")),
        };
        Ok(BlockHeader {
            number: w.number,
            parent_hash: w.parent_hash,
            timestamp: w.timestamp,
            gas_limit: w.gas_limit,
            gas_used: w.gas_used,
            tx_root: w.tx_root,
            sealer: w.sealer,
            difficulty: w.difficulty,
            seal,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<SealedTx>,
}

impl Block {
    pub fn hash(&self) -> Digest32 {
        self.header.hash()
    }
}

/// keccak over the canonical JSON list of transaction hashes.
pub fn tx_root<'a>(hashes: impl IntoIterator<Item = &'a Digest32>) -> Digest32 {
    let list: Vec<String> = hashes.into_iter().map(|h| h.to_hex()).collect();
    keccak256(&to_canonical_json(&list).expect("list serializes"))
}

/// A block together with its header hash, computed once and shared.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedBlock {
    inner: Arc<(Block, Digest32)>,
}

impl SealedBlock {
    pub fn new(block: Block) -> Self {
        let hash = block.hash();
        SealedBlock {
            inner: Arc::new((block, hash)),
        }
    }

    pub fn hash(&self) -> Digest32 {
        self.inner.1
    }

    pub fn block(&self) -> &Block {
        &self.inner.0
    }

    pub fn header(&self) -> &BlockHeader {
        &self.inner.0.header
    }

    pub fn transactions(&self) -> &[SealedTx] {
        &self.inner.0.transactions
    }

    pub fn number(&self) -> u64 {
        self.inner.0.header.number
    }
}

impl fmt::Debug for SealedBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealedBlock")
            .field("number", &self.number())
            .field("hash", &self.hash())
            .field("txs", &self.transactions().len())
            .finish()
    }
}

impl Serialize for SealedBlock {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.block().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SealedBlock {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(SealedBlock::new(Block::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    pub nonce: u64,
    pub balance: u64,
}

/// World state: accounts plus the record registry. Cheap to clone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainState {
    pub accounts: im::HashMap<Address, AccountState>,
    pub registry: RegistryState,
}

impl ChainState {
    pub fn account(&self, addr: &Address) -> AccountState {
        self.accounts.get(addr).copied().unwrap_or_default()
    }

    /// Order-independent digest of the whole state, for equality checks in tests and audits.
    pub fn digest(&self) -> Digest32 {
        let accounts: BTreeMap<Address, AccountState> =
            self.accounts.iter().map(|(a, s)| (*a, *s)).collect();
        let doc = json!({
            "accounts": accounts,
            "registry": self.registry.snapshot(),
        });
        keccak256(&canonical_json(&doc))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub config: ChainConfig,
    #[serde(default)]
    pub timestamp: u64,
    #[serde(default)]
    pub alloc: BTreeMap<Address, u64>,
}

impl Genesis {
    pub fn state(&self) -> ChainState {
        let mut state = ChainState::default();
        for (addr, balance) in &self.alloc {
            state.accounts.insert(
                *addr,
                AccountState {
                    nonce: 0,
                    balance: *balance,
                },
            );
        }
        state
    }

    /// The genesis header's tx_root commits to the whole genesis spec, so
    /// networks with different allocations or configs have different genesis hashes.
    pub fn block(&self) -> SealedBlock {
        let commitment = keccak256(&to_canonical_json(self).expect("genesis serializes"));
        let difficulty = match self.config.consensus {
            ConsensusKind::PoW => self.config.pow_initial_difficulty,
            ConsensusKind::PoA => 1,
        };
        SealedBlock::new(Block {
            header: BlockHeader {
                number: 0,
                parent_hash: Digest32::ZERO,
                timestamp: self.timestamp,
                gas_limit: self.config.block_gas_limit,
                gas_used: 0,
                tx_root: commitment,
                sealer: Address::default(),
                difficulty,
                seal: Seal::None,
            },
            transactions: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum TxError {
    #[error("signature does not match sender")]
    BadSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("gas limit {provided} below intrinsic gas {required}")]
    GasTooLow { required: u64, provided: u64 },
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("malformed transaction: {reason}")]
    Malformed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("parent hash does not match")]
    BadParent,
    #[error("invalid header: {0}")]
    BadHeader(String),
    #[error("tx_root does not match transactions")]
    BadTxRoot,
    #[error("gas_used is wrong or exceeds gas limit")]
    BadGasUsed,
    #[error("seal does not verify")]
    BadSeal,
    #[error("transaction {index} invalid: {cause}")]
    BadTx { index: usize, cause: TxError },
}

fn check_shape(tx: &Transaction) -> Result<(), TxError> {
    let malformed = |reason: &str| {
        Err(TxError::Malformed {
            reason: reason.into(),
        })
    };
    match tx.kind {
        TxKind::Transfer => {
            if tx.to.is_none() {
                return malformed("transfer without recipient");
            }
            if !tx.payload.is_empty() {
                return malformed("transfer with payload");
            }
        }
        TxKind::RegistryStore => {
            if tx.payload.len() != 1 {
                return malformed("store carries exactly one hash");
            }
        }
        TxKind::RegistryStoreBatch => {
            if tx.payload.is_empty() {
                return malformed("empty batch");
            }
        }
    }
    Ok(())
}

/// Stateless checks: shape, gas floor and signature.
pub fn validate_tx_static(tx: &Transaction, chain_id: u64) -> Result<(), TxError> {
    check_shape(tx)?;
    let required = tx.intrinsic_gas();
    if tx.gas_limit < required {
        return Err(TxError::GasTooLow {
            required,
            provided: tx.gas_limit,
        });
    }
    match recover_address(&tx.sighash(chain_id), &tx.signature) {
        Some(a) if a == tx.from => Ok(()),
        _ => Err(TxError::BadSignature),
    }
}

/// Checks `tx` against `state` expecting the sender's next nonce to be `expected_nonce`.
pub fn validate_tx_with_nonce(
    tx: &Transaction,
    state: &ChainState,
    chain_id: u64,
    expected_nonce: u64,
) -> Result<(), TxError> {
    validate_tx_static(tx, chain_id)?;
    if tx.nonce != expected_nonce {
        return Err(TxError::BadNonce {
            expected: expected_nonce,
            got: tx.nonce,
        });
    }
    if tx.kind == TxKind::Transfer {
        let have = state.account(&tx.from).balance;
        if have < tx.value {
            return Err(TxError::InsufficientBalance {
                have,
                need: tx.value,
            });
        }
    }
    Ok(())
}

pub fn validate_tx(tx: &Transaction, state: &ChainState, chain_id: u64) -> Result<(), TxError> {
    let expected = state.account(&tx.from).nonce;
    validate_tx_with_nonce(tx, state, chain_id, expected)
}

/// Applies an already validated transaction. Execution is total: every
/// kind succeeds and consumes exactly its intrinsic gas.
pub fn apply_tx(state: &mut ChainState, tx: &SealedTx, block_number: u64) -> ExecOutcome {
    let mut sender = state.account(&tx.from);
    sender.nonce += 1;
    match tx.kind {
        TxKind::Transfer => {
            sender.balance -= tx.value;
            state.accounts.insert(tx.from, sender);
            let to = tx.to.expect("validated transfer has recipient");
            let mut recipient = state.account(&to);
            recipient.balance += tx.value;
            state.accounts.insert(to, recipient);
        }
        TxKind::RegistryStore | TxKind::RegistryStoreBatch => {
            state.accounts.insert(tx.from, sender);
            for h in &tx.payload {
                state.registry.store(*h, block_number);
            }
        }
    }
    ExecOutcome {
        tx_hash: tx.hash(),
        status: TxStatus::Success,
        gas_used: tx.intrinsic_gas(),
    }
}

/// Header fields the block producer chooses.
#[derive(Debug, Clone, Copy)]
pub struct BlockTemplate {
    pub timestamp: u64,
    pub sealer: Address,
    pub difficulty: u64,
}

pub struct Assembled {
    pub block: Block,
    pub state: ChainState,
    pub outcomes: Vec<ExecOutcome>,
}

/// Greedily packs `pending` in arrival order under the block gas limit.
/// A sender whose transaction is skipped has its later transactions skipped
/// too, which preserves nonce order; skipped transactions stay pending.
pub fn assemble_block<'a>(
    parent: &BlockHeader,
    parent_hash: Digest32,
    parent_state: &ChainState,
    pending: impl IntoIterator<Item = &'a SealedTx>,
    config: &ChainConfig,
    template: BlockTemplate,
) -> Assembled {
    let number = parent.number + 1;
    let mut state = parent_state.clone();
    let mut included = Vec::new();
    let mut outcomes = Vec::new();
    let mut gas_used = 0u64;
    let mut blocked: HashSet<Address> = HashSet::new();
    for tx in pending {
        if gas_used + TX_BASE_GAS > config.block_gas_limit {
            break;
        }
        if blocked.contains(&tx.from) {
            continue;
        }
        let gas = tx.intrinsic_gas();
        if gas_used + gas > config.block_gas_limit
            || validate_tx(tx, &state, config.chain_id).is_err()
        {
            blocked.insert(tx.from);
            continue;
        }
        let outcome = apply_tx(&mut state, tx, number);
        gas_used += outcome.gas_used;
        outcomes.push(outcome);
        included.push(tx.clone());
    }
    let header = BlockHeader {
        number,
        parent_hash,
        timestamp: template.timestamp,
        gas_limit: config.block_gas_limit,
        gas_used,
        tx_root: tx_root(included.iter().map(|t| &t.hash)),
        sealer: template.sealer,
        difficulty: template.difficulty,
        seal: Seal::None,
    };
    Assembled {
        block: Block {
            header,
            transactions: included,
        },
        state,
        outcomes,
    }
}

/// Full structural and execution check of a block against its parent.
/// `seal_valid` delegates the consensus check to the caller's engine.
pub fn validate_block(
    block: &SealedBlock,
    parent: &SealedBlock,
    parent_state: &ChainState,
    config: &ChainConfig,
    seal_valid: impl FnOnce(&BlockHeader) -> bool,
) -> Result<(ChainState, Vec<Receipt>), BlockError> {
    let header = block.header();
    if header.parent_hash != parent.hash() {
        return Err(BlockError::BadParent);
    }
    if header.number != parent.number() + 1 {
        return Err(BlockError::BadHeader(format!(
            "number {} does not follow parent {}",
            header.number,
            parent.number()
        )));
    }
    if header.timestamp < parent.header().timestamp {
        return Err(BlockError::BadHeader("timestamp before parent".into()));
    }
    if header.gas_limit != config.block_gas_limit {
        return Err(BlockError::BadHeader(format!(
            "gas limit {} differs from configured {}",
            header.gas_limit, config.block_gas_limit
        )));
    }
    if tx_root(block.transactions().iter().map(|t| &t.hash)) != header.tx_root {
        return Err(BlockError::BadTxRoot);
    }
    if header.gas_used > header.gas_limit {
        return Err(BlockError::BadGasUsed);
    }
    if !seal_valid(header) {
        return Err(BlockError::BadSeal);
    }
    let mut state = parent_state.clone();
    let mut outcomes = Vec::with_capacity(block.transactions().len());
    let mut gas = 0u64;
    for (index, tx) in block.transactions().iter().enumerate() {
        validate_tx(tx, &state, config.chain_id).map_err(|cause| BlockError::BadTx { index, cause })?;
        let out = apply_tx(&mut state, tx, header.number);
        gas += out.gas_used;
        outcomes.push(out);
    }
    if gas != header.gas_used {
        return Err(BlockError::BadGasUsed);
    }
    let hash = block.hash();
    let receipts = outcomes
        .into_iter()
        .map(|o| o.into_receipt(hash, header.number))
        .collect();
    Ok((state, receipts))
}
