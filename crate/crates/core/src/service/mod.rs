//! The DApp backend: login, record viewing, first issue, update approval
//! and public verification over a chain backend and a document store.

pub mod auth;
pub mod backend;
pub mod demo;
pub mod http;
pub mod launch;
pub mod rpc;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::chain::{TxRequest, GAS_PER_STORED_HASH, TX_BASE_GAS};
use crate::crypto::{keccak256, Address, Digest32, KeyPair, Signature};
use crate::docstore::{record_hash, AcademicRecord, DocStore, DocStoreError};

pub use auth::{Authenticator, Challenge, Clock, ManualClock, Session, SessionRole, SystemClock};
pub use backend::{BackendError, ChainBackend, HeadInfo, NodeAccess, SimBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("missing or expired session")]
    Unauthenticated,
    #[error("administrator session required")]
    Unauthorized,
    #[error("{0} not found")]
    NotFound(String),
    #[error("record hash is already anchored")]
    AlreadyAnchored,
    #[error("record of {student} has no pending change")]
    NotPending { student: Address },
    #[error("block gas limit cannot fit a single record hash")]
    GasTooLow,
    #[error("no outstanding challenge with that nonce for this address")]
    UnknownChallenge,
    #[error("challenge expired")]
    Expired,
    #[error("signature does not recover to the address")]
    BadSignature,
    #[error("transaction rejected: {cause}")]
    TxRejected { cause: Value },
    #[error("invalid params: {0}")]
    InvalidParams(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> i64 {
        match self {
            ServiceError::Unauthenticated => 1001,
            ServiceError::Unauthorized => 1002,
            ServiceError::NotFound(_) => 1003,
            ServiceError::AlreadyAnchored => 1004,
            ServiceError::NotPending { .. } => 1005,
            ServiceError::GasTooLow => 1006,
            ServiceError::UnknownChallenge => 1010,
            ServiceError::Expired => 1011,
            ServiceError::BadSignature => 1012,
            ServiceError::TxRejected { .. } => 1020,
            ServiceError::InvalidParams(_) => rpc::INVALID_PARAMS,
            ServiceError::Internal(_) => rpc::INTERNAL_ERROR,
        }
    }

    pub fn data(&self) -> Option<Value> {
        match self {
            ServiceError::NotPending { student } => Some(json!({ "student": student })),
            ServiceError::TxRejected { cause } => Some(cause.clone()),
            _ => None,
        }
    }
}

impl From<DocStoreError> for ServiceError {
    fn from(e: DocStoreError) -> Self {
        match e {
            DocStoreError::NotFound => ServiceError::NotFound("record".into()),
            DocStoreError::NotAuthorized => ServiceError::Unauthorized,
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<BackendError> for ServiceError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Rejected(r) => ServiceError::TxRejected {
                cause: serde_json::to_value(&r).unwrap_or(Value::Null),
            },
            BackendError::Unavailable(m) => ServiceError::Internal(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub record: AcademicRecord,
    pub record_hash: Digest32,
    pub anchored: bool,
    pub anchored_in_block: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub student: Address,
    pub record_hash: Digest32,
    pub record: AcademicRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub valid: bool,
    pub hash: Digest32,
    pub anchored_in_block: Option<u64>,
}

struct Watch {
    issuer: Address,
    records: Vec<(Address, Digest32)>,
}

pub struct Service {
    backend: Arc<dyn ChainBackend>,
    docs: Mutex<DocStore>,
    auth: Authenticator,
    /// Signing keys of the administrators whose transactions this service sends.
    admin_keys: HashMap<Address, KeyPair>,
    /// Serializes nonce assignment for admin transactions.
    submit_lock: Mutex<()>,
    watches: Mutex<BTreeMap<Digest32, Watch>>,
}

impl Service {
    pub fn new(backend: Arc<dyn ChainBackend>, docs: DocStore, admin_keys: Vec<KeyPair>, clock: Arc<dyn Clock>) -> Self {
        Service {
            backend,
            docs: Mutex::new(docs),
            auth: Authenticator::new(clock),
            admin_keys: admin_keys.into_iter().map(|k| (k.address(), k)).collect(),
            submit_lock: Mutex::new(()),
            watches: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn backend(&self) -> &Arc<dyn ChainBackend> {
        &self.backend
    }

    /// Direct access to the store, e.g. for seeding records.
    pub fn docs(&self) -> parking_lot::MutexGuard<'_, DocStore> {
        self.docs.lock()
    }

    pub fn auth_challenge(&self, address: Address) -> Challenge {
        self.auth.challenge(address)
    }

    pub fn auth_verify(&self, address: Address, nonce: &str, signature: &Signature) -> Result<Session, ServiceError> {
        let docs = self.docs.lock();
        self.auth.verify(address, nonce, signature, |a| docs.acl().is_admin(a))
    }

    pub fn session(&self, token: &str) -> Result<Session, ServiceError> {
        self.auth.session(token)
    }

    fn view(&self, record: AcademicRecord) -> RecordView {
        let h = record_hash(&record);
        let block = self.backend.anchored_in(&h);
        RecordView {
            record,
            record_hash: h,
            anchored: block.is_some(),
            anchored_in_block: block,
        }
    }

    /// The caller's own record; admins may pass `student` to view any record.
    pub fn get_record(&self, token: &str, student: Option<Address>) -> Result<RecordView, ServiceError> {
        let s = self.auth.session(token)?;
        let subject = match (student, s.role) {
            (Some(a), SessionRole::Admin) => a,
            (Some(a), SessionRole::Student) if a != s.subject => return Err(ServiceError::Unauthorized),
            _ => s.subject,
        };
        let record = self.docs.lock().get_record(&subject)?.clone();
        Ok(self.view(record))
    }

    /// The canonical export bytes of the caller's record.
    pub fn export_record(&self, token: &str) -> Result<Vec<u8>, ServiceError> {
        let s = self.auth.session(token)?;
        Ok(self.docs.lock().export_ar(&s.subject)?)
    }

    fn admin_key(&self, s: &Session) -> Result<KeyPair, ServiceError> {
        self.admin_keys
            .get(&s.subject)
            .cloned()
            .ok_or_else(|| ServiceError::Internal(format!("no signing key held for administrator {}", s.subject)))
    }

    fn send(&self, key: &KeyPair, build: impl FnOnce(u64) -> TxRequest) -> Result<Digest32, ServiceError> {
        let _guard = self.submit_lock.lock();
        let chain_id = self.backend.config().chain_id;
        let nonce = self.backend.next_nonce(&key.address());
        let tx = build(nonce).sign(key, chain_id);
        Ok(self.backend.submit_tx(tx)?)
    }

    fn watch(&self, tx: Digest32, issuer: Address, records: Vec<(Address, Digest32)>) {
        self.watches.lock().insert(tx, Watch { issuer, records });
    }

    fn check_capacity(&self) -> Result<usize, ServiceError> {
        let limit = self.backend.config().block_gas_limit;
        if limit < TX_BASE_GAS + GAS_PER_STORED_HASH {
            return Err(ServiceError::GasTooLow);
        }
        Ok(((limit - TX_BASE_GAS) / GAS_PER_STORED_HASH) as usize)
    }

    pub fn issue_first(&self, token: &str, student: Address) -> Result<Digest32, ServiceError> {
        let s = self.auth.admin_session(token)?;
        let key = self.admin_key(&s)?;
        let h = record_hash(self.docs.lock().get_record(&student)?);
        if self.backend.anchored_in(&h).is_some() {
            return Err(ServiceError::AlreadyAnchored);
        }
        self.check_capacity()?;
        let from = key.address();
        let tx = self.send(&key, |nonce| TxRequest::store(from, nonce, h))?;
        self.watch(tx, from, vec![(student, h)]);
        Ok(tx)
    }

    pub fn pending_updates(&self, token: &str) -> Result<Vec<PendingEntry>, ServiceError> {
        self.auth.admin_session(token)?;
        let docs = self.docs.lock();
        let pending = docs.list_pending(|h| self.backend.anchored_in(h).is_some());
        pending
            .into_iter()
            .map(|(student, record_hash)| {
                Ok(PendingEntry {
                    student,
                    record_hash,
                    record: docs.get_record(&student)?.clone(),
                })
            })
            .collect()
    }

    /// One batch transaction per block-sized chunk, or one transaction per record.
    pub fn approve_updates(&self, token: &str, students: &[Address], batch: bool) -> Result<Vec<Digest32>, ServiceError> {
        let s = self.auth.admin_session(token)?;
        let key = self.admin_key(&s)?;
        let pending: HashMap<Address, Digest32> = self
            .docs
            .lock()
            .list_pending(|h| self.backend.anchored_in(h).is_some())
            .into_iter()
            .collect();
        let mut selected: Vec<(Address, Digest32)> = Vec::with_capacity(students.len());
        for st in students {
            let h = *pending.get(st).ok_or(ServiceError::NotPending { student: *st })?;
            if !selected.iter().any(|(a, _)| a == st) {
                selected.push((*st, h));
            }
        }
        let per_tx = self.check_capacity()?;
        let from = key.address();
        let mut txs = Vec::new();
        if batch {
            for chunk in selected.chunks(per_tx) {
                let hashes: Vec<Digest32> = chunk.iter().map(|(_, h)| *h).collect();
                let tx = self.send(&key, |nonce| TxRequest::store_batch(from, nonce, hashes))?;
                self.watch(tx, from, chunk.to_vec());
                txs.push(tx);
            }
        } else {
            for (st, h) in selected {
                let tx = self.send(&key, |nonce| TxRequest::store(from, nonce, h))?;
                self.watch(tx, from, vec![(st, h)]);
                txs.push(tx);
            }
        }
        Ok(txs)
    }

    /// Hashes the uploaded bytes as they are and looks the hash up on chain.
    pub fn verify_document(&self, file: &[u8]) -> VerificationResult {
        let hash = keccak256(file);
        let block = self.backend.anchored_in(&hash);
        VerificationResult {
            valid: block.is_some(),
            hash,
            anchored_in_block: block,
        }
    }

    /// Writes tx hashes into records whose anchoring transaction now has a
    /// receipt. Returns the number of records updated.
    pub fn poll_confirmations(&self) -> usize {
        let ready: Vec<(Digest32, Watch)> = {
            let mut w = self.watches.lock();
            let done: Vec<Digest32> = w.keys().filter(|t| self.backend.receipt(t).is_some()).copied().collect();
            done.into_iter().filter_map(|t| w.remove(&t).map(|x| (t, x))).collect()
        };
        let mut updated = 0;
        let mut docs = self.docs.lock();
        for (tx, watch) in ready {
            let Some(key) = self.admin_keys.get(&watch.issuer) else { continue };
            for (student, h) in watch.records {
                // skip records edited again since the hash was sent
                let current = docs.get_record(&student).ok().map(record_hash);
                if current == Some(h) && docs.set_tx_hash(&student, tx, key).is_ok() {
                    updated += 1;
                }
            }
        }
        updated
    }

    pub fn watched(&self) -> usize {
        self.watches.lock().len()
    }
}
