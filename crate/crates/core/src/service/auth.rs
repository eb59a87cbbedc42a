//! Challenge-response login and bearer sessions.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{keccak256, recover_address, Address, Signature};

use super::ServiceError;

pub const CHALLENGE_TTL_S: u64 = 120;
pub const SESSION_TTL_S: u64 = 3600;

/// Source of unix seconds, replaceable in tests.
pub trait Clock: Send + Sync {
    fn now_s(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_s(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    }
}

/// A clock that only moves when told to.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new(start_s: u64) -> Self {
        ManualClock(Arc::new(AtomicU64::new(start_s)))
    }

    pub fn advance(&self, s: u64) {
        self.0.fetch_add(s, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_s(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub address: Address,
    pub nonce: String,
    pub issued_at: u64,
    pub ttl_s: u64,
}

impl Challenge {
    /// The exact text the wallet signs.
    pub fn message(&self) -> String {
        challenge_message(&self.nonce, self.issued_at)
    }

    pub fn expires_at(&self) -> u64 {
        self.issued_at + self.ttl_s
    }
}

pub fn challenge_message(nonce: &str, issued_at: u64) -> String {
    format!("Sign in to credchain\nnonce: {nonce}\nissued_at: {issued_at}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionRole {
    Student,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub subject: Address,
    pub role: SessionRole,
    pub expires_at: u64,
}

fn random_hex32() -> String {
    let mut b = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut b);
    hex::encode(b)
}

pub struct Authenticator {
    clock: Arc<dyn Clock>,
    /// Outstanding challenges keyed by nonce.
    challenges: Mutex<HashMap<String, Challenge>>,
    sessions: Mutex<HashMap<String, Session>>,
}

impl Authenticator {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Authenticator {
            clock,
            challenges: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn now_s(&self) -> u64 {
        self.clock.now_s()
    }

    pub fn challenge(&self, address: Address) -> Challenge {
        let now = self.clock.now_s();
        let c = Challenge {
            address,
            nonce: random_hex32(),
            issued_at: now,
            ttl_s: CHALLENGE_TTL_S,
        };
        let mut map = self.challenges.lock();
        map.retain(|_, c| c.expires_at() >= now);
        map.insert(c.nonce.clone(), c.clone());
        c
    }

    /// Consumes the challenge and, if the signature recovers to `address`, opens a session.
    pub fn verify(
        &self,
        address: Address,
        nonce: &str,
        signature: &Signature,
        is_admin: impl FnOnce(&Address) -> bool,
    ) -> Result<Session, ServiceError> {
        let now = self.clock.now_s();
        let challenge = {
            let mut map = self.challenges.lock();
            match map.get(nonce) {
                Some(c) if c.address == address => map.remove(nonce).expect("present"),
                _ => return Err(ServiceError::UnknownChallenge),
            }
        };
        if now > challenge.expires_at() {
            return Err(ServiceError::Expired);
        }
        let digest = keccak256(challenge.message().as_bytes());
        if recover_address(&digest, signature) != Some(address) {
            return Err(ServiceError::BadSignature);
        }
        let session = Session {
            token: random_hex32(),
            subject: address,
            role: if is_admin(&address) {
                SessionRole::Admin
            } else {
                SessionRole::Student
            },
            expires_at: now + SESSION_TTL_S,
        };
        let mut sessions = self.sessions.lock();
        sessions.retain(|_, s| s.expires_at >= now);
        sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, token: &str) -> Result<Session, ServiceError> {
        let now = self.clock.now_s();
        match self.sessions.lock().get(token) {
            Some(s) if s.expires_at >= now => Ok(s.clone()),
            _ => Err(ServiceError::Unauthenticated),
        }
    }

    pub fn admin_session(&self, token: &str) -> Result<Session, ServiceError> {
        let s = self.session(token)?;
        if s.role != SessionRole::Admin {
            return Err(ServiceError::Unauthorized);
        }
        Ok(s)
    }
}
