//! Off-chain academic record store.
//!
//! A single-writer log of signed operations, materialized into a
//! key → record view (last `Put` wins). The log can be backed by a
//! newline-delimited JSON file that is flushed before each write returns.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::crypto::{canonical_json, keccak256, recover_address, Address, Digest32, KeyPair, Signature};

#[derive(Debug, Error)]
pub enum DocStoreError {
    #[error("writer is not authorized for this operation")]
    NotAuthorized,
    #[error("invalid record field `{field}`")]
    InvalidRecord { field: String },
    #[error("record not found")]
    NotFound,
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectMark {
    pub subject: String,
    /// Decimal string in [0, 10]; empty when not yet evaluated.
    pub mark: String,
    pub subject_type: String,
    pub course: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcademicRecord {
    pub id: Digest32,
    pub public_key: Address,
    pub degree: String,
    pub issue_date: String,
    pub name: String,
    pub surname: String,
    pub subjects: Vec<SubjectMark>,
    /// Anchoring transaction; bookkeeping only and excluded from the content hash.
    #[serde(
        default,
        serialize_with = "ser_opt_digest",
        deserialize_with = "de_opt_digest"
    )]
    pub tx_hash: Option<Digest32>,
}

fn ser_opt_digest<S: Serializer>(v: &Option<Digest32>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(d) => d.serialize(s),
        None => s.serialize_str(""),
    }
}

fn de_opt_digest<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Digest32>, D::Error> {
    let s = String::deserialize(d)?;
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(serde::de::Error::custom)
    }
}

impl AcademicRecord {
    /// The record as JSON without `tx_hash`: the content that gets anchored.
    pub fn content(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("record serializes");
        v.as_object_mut().expect("object").remove("tx_hash");
        v
    }

    pub fn validate(&self) -> Result<(), DocStoreError> {
        let invalid = |field: &str| DocStoreError::InvalidRecord {
            field: field.to_string(),
        };
        if !self.issue_date.is_empty()
            && chrono::NaiveDate::parse_from_str(&self.issue_date, "%Y-%m-%d").is_err()
        {
            return Err(invalid("issue_date"));
        }
        for (i, s) in self.subjects.iter().enumerate() {
            if !valid_mark(&s.mark) {
                return Err(invalid(&format!("subjects[{i}].mark")));
            }
        }
        Ok(())
    }
}

fn valid_mark(mark: &str) -> bool {
    if mark.is_empty() {
        return true;
    }
    let (int, frac) = match mark.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mark, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return false;
    }
    mark.parse::<f64>().is_ok_and(|x| (0.0..=10.0).contains(&x))
}

/// keccak256 of the canonical record content (without `tx_hash`).
pub fn record_hash(record: &AcademicRecord) -> Digest32 {
    keccak256(&canonical_json(&record.content()))
}

/// Canonical bytes of the record without `tx_hash`; their keccak is what gets anchored.
pub fn export_bytes(record: &AcademicRecord) -> Vec<u8> {
    canonical_json(&record.content())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Put,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreOp {
    pub seq: u64,
    pub op: OpKind,
    pub doc_key: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<AcademicRecord>,
    pub writer: Address,
    pub signature: Signature,
}

impl StoreOp {
    /// Digest the writer signs: canonical op without the signature field.
    pub fn signing_digest(&self) -> Digest32 {
        let mut v = serde_json::to_value(self).expect("op serializes");
        v.as_object_mut().expect("object").remove("signature");
        keccak256(&canonical_json(&v))
    }

    fn new_signed(seq: u64, op: OpKind, doc_key: Address, body: Option<AcademicRecord>, key: &KeyPair) -> Self {
        let mut o = StoreOp {
            seq,
            op,
            doc_key,
            body,
            writer: key.address(),
            signature: Signature {
                r: [0; 32],
                s: [0; 32],
                v: 0,
            },
        };
        o.signature = key.sign(&o.signing_digest());
        o
    }

    fn signature_valid(&self) -> bool {
        recover_address(&self.signing_digest(), &self.signature) == Some(self.writer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessControl {
    pub writers: Vec<Address>,
    pub admins: Vec<Address>,
    #[serde(default = "yes")]
    pub public_read: bool,
}

fn yes() -> bool {
    true
}

impl AccessControl {
    /// Admins are always writers.
    pub fn new(writers: impl IntoIterator<Item = Address>, admins: impl IntoIterator<Item = Address>) -> Self {
        let admins: Vec<Address> = admins.into_iter().collect();
        let mut writers: Vec<Address> = writers.into_iter().collect();
        for a in &admins {
            if !writers.contains(a) {
                writers.push(*a);
            }
        }
        AccessControl {
            writers,
            admins,
            public_read: true,
        }
    }

    pub fn is_writer(&self, a: &Address) -> bool {
        self.writers.contains(a)
    }

    pub fn is_admin(&self, a: &Address) -> bool {
        self.admins.contains(a)
    }
}

/// Folds a sequence of ops into the record view. Pure; used for replay.
pub fn materialize<'a>(ops: impl IntoIterator<Item = &'a StoreOp>) -> BTreeMap<Address, AcademicRecord> {
    let mut view = BTreeMap::new();
    for op in ops {
        match op.op {
            OpKind::Put => {
                if let Some(body) = &op.body {
                    view.insert(op.doc_key, body.clone());
                }
            }
            OpKind::Delete => {
                view.remove(&op.doc_key);
            }
        }
    }
    view
}

pub struct DocStore {
    acl: AccessControl,
    log: Vec<StoreOp>,
    view: BTreeMap<Address, AcademicRecord>,
    file: Option<(PathBuf, File)>,
}

impl DocStore {
    pub fn in_memory(acl: AccessControl) -> Self {
        DocStore {
            acl,
            log: Vec::new(),
            view: BTreeMap::new(),
            file: None,
        }
    }

    /// Opens (or creates) a log file and replays it, re-checking every
    /// signature, writer and sequence number.
    pub fn open(path: impl AsRef<Path>, acl: AccessControl) -> Result<Self, DocStoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = DocStore::in_memory(acl);
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let op: StoreOp = serde_json::from_str(&line).map_err(|e| DocStoreError::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                store.check_op(&op).map_err(|e| DocStoreError::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                store.apply(op);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        store.file = Some((path, file));
        Ok(store)
    }

    pub fn acl(&self) -> &AccessControl {
        &self.acl
    }

    pub fn log(&self) -> &[StoreOp] {
        &self.log
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    fn next_seq(&self) -> u64 {
        self.log.last().map_or(1, |o| o.seq + 1)
    }

    fn check_op(&self, op: &StoreOp) -> Result<(), DocStoreError> {
        if !op.signature_valid() || !self.acl.is_writer(&op.writer) {
            return Err(DocStoreError::NotAuthorized);
        }
        if op.seq != self.next_seq() {
            return Err(DocStoreError::CorruptLog {
                line: self.log.len() + 1,
                reason: format!("seq {} out of order", op.seq),
            });
        }
        if let Some(body) = &op.body {
            if body.public_key != op.doc_key {
                return Err(DocStoreError::InvalidRecord {
                    field: "public_key".into(),
                });
            }
            body.validate()?;
        }
        Ok(())
    }

    fn apply(&mut self, op: StoreOp) {
        match op.op {
            OpKind::Put => {
                if let Some(body) = &op.body {
                    self.view.insert(op.doc_key, body.clone());
                }
            }
            OpKind::Delete => {
                self.view.remove(&op.doc_key);
            }
        }
        self.log.push(op);
    }

    fn append(&mut self, op: StoreOp) -> Result<u64, DocStoreError> {
        self.check_op(&op)?;
        if let Some((_, file)) = &mut self.file {
            let mut line = canonical_json(&serde_json::to_value(&op).expect("op serializes"));
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        let seq = op.seq;
        self.apply(op);
        Ok(seq)
    }

    /// Appends an op signed elsewhere (e.g. by a professor's client).
    pub fn append_signed(&mut self, op: StoreOp) -> Result<u64, DocStoreError> {
        self.append(op)
    }

    pub fn put_record(&mut self, mut record: AcademicRecord, writer: &KeyPair) -> Result<u64, DocStoreError> {
        if !self.acl.is_writer(&writer.address()) {
            return Err(DocStoreError::NotAuthorized);
        }
        record.validate()?;
        if record.tx_hash.is_none() {
            if let Some(existing) = self.view.get(&record.public_key) {
                record.tx_hash = existing.tx_hash;
            }
        }
        let key = record.public_key;
        let op = StoreOp::new_signed(self.next_seq(), OpKind::Put, key, Some(record), writer);
        self.append(op)
    }

    pub fn delete_record(&mut self, student: &Address, writer: &KeyPair) -> Result<u64, DocStoreError> {
        if !self.acl.is_writer(&writer.address()) {
            return Err(DocStoreError::NotAuthorized);
        }
        if !self.view.contains_key(student) {
            return Err(DocStoreError::NotFound);
        }
        let op = StoreOp::new_signed(self.next_seq(), OpKind::Delete, *student, None, writer);
        self.append(op)
    }

    pub fn get_record(&self, student: &Address) -> Result<&AcademicRecord, DocStoreError> {
        self.view.get(student).ok_or(DocStoreError::NotFound)
    }

    pub fn records(&self) -> impl Iterator<Item = &AcademicRecord> {
        self.view.values()
    }

    pub fn export_ar(&self, student: &Address) -> Result<Vec<u8>, DocStoreError> {
        Ok(export_bytes(self.get_record(student)?))
    }

    /// Records the anchoring transaction. Only admins may do this; the
    /// content hash is unaffected.
    pub fn set_tx_hash(&mut self, student: &Address, tx_hash: Digest32, admin: &KeyPair) -> Result<u64, DocStoreError> {
        if !self.acl.is_admin(&admin.address()) {
            return Err(DocStoreError::NotAuthorized);
        }
        let mut record = self.get_record(student)?.clone();
        record.tx_hash = Some(tx_hash);
        let op = StoreOp::new_signed(self.next_seq(), OpKind::Put, *student, Some(record), admin);
        self.append(op)
    }

    /// Records whose current content hash is not anchored, sorted by student address.
    pub fn list_pending(&self, registry_check: impl Fn(&Digest32) -> bool) -> Vec<(Address, Digest32)> {
        self.view
            .iter()
            .map(|(addr, rec)| (*addr, record_hash(rec)))
            .filter(|(_, h)| !registry_check(h))
            .collect()
    }

    /// Digest of the materialized view, for equality checks.
    pub fn view_digest(&self) -> Digest32 {
        let v = serde_json::to_value(&self.view).expect("view serializes");
        keccak256(&canonical_json(&v))
    }
}

/// Record generators for demos, tests and benchmarks.
pub mod fixtures {
    use super::*;
    use rand::Rng;

    const SUBJECTS: [&str; 10] = [
        "Computing Theory",
        "Calculus",
        "Business Management",
        "Programming I",
        "Discrete Math",
        "Principles of Computer Engineering",
        "Programming II",
        "Linear Algebra",
        "Physics",
        "Statistics",
    ];
    const NAMES: [&str; 6] = ["Rose", "Alan", "Grace", "Edsger", "Barbara", "Ken"];
    const SURNAMES: [&str; 6] = ["Howard", "Turing", "Hopper", "Dijkstra", "Liskov", "Thompson"];

    pub fn random_mark<R: Rng>(rng: &mut R) -> String {
        let tenths: u32 = rng.gen_range(0..=100);
        if tenths % 10 == 0 {
            (tenths / 10).to_string()
        } else {
            format!("{}.{}", tenths / 10, tenths % 10)
        }
    }

    /// A record in the shape of a first-year transcript, some marks still empty.
    pub fn random_record<R: Rng>(rng: &mut R, student: Address) -> AcademicRecord {
        let graded = rng.gen_range(0..=SUBJECTS.len());
        AcademicRecord {
            id: Digest32(rng.gen()),
            public_key: student,
            degree: "Computer science".into(),
            issue_date: String::new(),
            name: NAMES[rng.gen_range(0..NAMES.len())].into(),
            surname: SURNAMES[rng.gen_range(0..SURNAMES.len())].into(),
            subjects: SUBJECTS
                .iter()
                .enumerate()
                .map(|(i, s)| SubjectMark {
                    subject: (*s).into(),
                    mark: if i < graded { random_mark(rng) } else { String::new() },
                    subject_type: "Basic Core".into(),
                    course: "23/24".into(),
                })
                .collect(),
            tx_hash: None,
        }
    }
}
