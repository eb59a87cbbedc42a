//! Blocking JSON-RPC client and a stress target that drives a node through
//! its service endpoint with pre-signed transfers.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::chain::{ConsensusKind, SealedBlock, SealedTx};
use crate::crypto::{Address, Digest32, KeyPair};
use crate::service::HeadInfo;

use super::stress::{transfer_workload, workload_senders, StressError, StressRun, StressTarget};

#[derive(Debug, Error)]
pub enum RpcCallError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String, data: Option<Value> },
    #[error("unexpected reply: {0}")]
    Decode(String),
}

pub struct RpcClient {
    url: String,
    http: reqwest::blocking::Client,
    next_id: std::sync::atomic::AtomicU64,
}

impl RpcClient {
    pub fn new(url: impl Into<String>) -> Self {
        RpcClient {
            url: url.into(),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("http client"),
            next_id: 1.into(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn id(&self) -> u64 {
        self.next_id.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
    }

    fn post(&self, body: &Value) -> Result<Value, RpcCallError> {
        self.http
            .post(&self.url)
            .json(body)
            .send()
            .and_then(|r| r.json::<Value>())
            .map_err(|e| RpcCallError::Transport(e.to_string()))
    }

    fn unwrap_reply(mut v: Value) -> Result<Value, RpcCallError> {
        if let Some(e) = v.get("error") {
            return Err(RpcCallError::Rpc {
                code: e["code"].as_i64().unwrap_or(0),
                message: e["message"].as_str().unwrap_or("").to_string(),
                data: e.get("data").cloned(),
            });
        }
        match v.get_mut("result") {
            Some(r) => Ok(r.take()),
            None => Err(RpcCallError::Decode(v.to_string())),
        }
    }

    pub fn call_value(&self, method: &str, params: Value) -> Result<Value, RpcCallError> {
        let body = json!({ "jsonrpc": "2.0", "id": self.id(), "method": method, "params": params });
        Self::unwrap_reply(self.post(&body)?)
    }

    pub fn call<T: DeserializeOwned>(&self, method: &str, params: Value) -> Result<T, RpcCallError> {
        let v = self.call_value(method, params)?;
        serde_json::from_value(v).map_err(|e| RpcCallError::Decode(e.to_string()))
    }

    /// Sends all calls in one batch request; replies come back in call order.
    pub fn batch(&self, calls: &[(&str, Value)]) -> Result<Vec<Result<Value, RpcCallError>>, RpcCallError> {
        let first = self.next_id.fetch_add(calls.len() as u64, std::sync::atomic::Ordering::Relaxed);
        let body: Vec<Value> = calls
            .iter()
            .enumerate()
            .map(|(i, (m, p))| json!({ "jsonrpc": "2.0", "id": first + i as u64, "method": m, "params": p }))
            .collect();
        let Value::Array(mut replies) = self.post(&Value::Array(body))? else {
            return Err(RpcCallError::Decode("batch reply is not an array".into()));
        };
        replies.sort_by_key(|r| r["id"].as_u64().unwrap_or(u64::MAX));
        if replies.len() != calls.len() {
            return Err(RpcCallError::Decode(format!("{} replies for {} calls", replies.len(), calls.len())));
        }
        Ok(replies.into_iter().map(Self::unwrap_reply).collect())
    }

    pub fn head(&self) -> Result<HeadInfo, RpcCallError> {
        self.call("chain_getHead", json!({}))
    }

    pub fn block(&self, number: u64) -> Result<Option<SealedBlock>, RpcCallError> {
        match self.call_value("chain_getBlock", json!({ "number": number })) {
            Ok(v) => serde_json::from_value(v["block"].clone())
                .map(Some)
                .map_err(|e| RpcCallError::Decode(e.to_string())),
            Err(RpcCallError::Rpc { code: 1003, .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn next_nonce(&self, address: &Address) -> Result<u64, RpcCallError> {
        self.call("account_getNonce", json!({ "address": address }))
    }

    pub fn submit_raw(&self, tx: &SealedTx) -> Result<Digest32, RpcCallError> {
        let v = self.call_value("tx_submitRaw", json!({ "tx": tx }))?;
        serde_json::from_value(v["tx_hash"].clone()).map_err(|e| RpcCallError::Decode(e.to_string()))
    }
}

/// Stress target for a live node reached over JSON-RPC. Senders come from
/// [`workload_senders`] and must be funded in the node's genesis.
pub struct RpcStressTarget {
    pub client: RpcClient,
    pub chain_id: u64,
    pub consensus: ConsensusKind,
    pub gas_limit: u64,
    pub n_senders: usize,
    pub poll_interval: Duration,
    pub deadline: Duration,
    /// Every run's transactions, kept for workload comparisons.
    pub submitted: Vec<Vec<SealedTx>>,
}

impl RpcStressTarget {
    pub fn new(url: impl Into<String>, chain_id: u64, consensus: ConsensusKind, gas_limit: u64) -> Self {
        RpcStressTarget {
            client: RpcClient::new(url),
            chain_id,
            consensus,
            gas_limit,
            n_senders: 10,
            poll_interval: Duration::from_millis(10),
            deadline: Duration::from_secs(1800),
            submitted: Vec::new(),
        }
    }
}

fn transport(e: RpcCallError) -> StressError {
    StressError::Transport(e.to_string())
}

struct Tracker {
    next_block: u64,
    head: u64,
    outstanding: HashSet<Digest32>,
    last_poll: Instant,
}

impl Tracker {
    /// Reads new blocks up to the current head. Returns true if the head moved.
    fn poll(&mut self, client: &RpcClient) -> Result<bool, StressError> {
        self.last_poll = Instant::now();
        let head = client.head().map_err(transport)?;
        if head.number == self.head {
            return Ok(false);
        }
        self.head = head.number;
        while self.next_block <= head.number {
            let Some(b) = client.block(self.next_block).map_err(transport)? else { break };
            for tx in b.transactions() {
                self.outstanding.remove(&tx.hash());
            }
            self.next_block += 1;
        }
        Ok(true)
    }
}

impl StressTarget for RpcStressTarget {
    fn consensus(&self) -> ConsensusKind {
        self.consensus
    }

    fn gas_limit(&self) -> u64 {
        self.gas_limit
    }

    fn run(&mut self, n_tx: usize, batch_size: usize, repeat: usize) -> Result<StressRun, StressError> {
        let senders: Vec<KeyPair> = workload_senders(self.n_senders);
        let nonces = senders
            .iter()
            .map(|k| self.client.next_nonce(&k.address()))
            .collect::<Result<Vec<u64>, _>>()
            .map_err(transport)?;
        let txs = transfer_workload(self.chain_id, n_tx, &senders, &nonces);
        let start_number = self.client.head().map_err(transport)?.number;
        let mut tracker = Tracker {
            next_block: start_number + 1,
            head: start_number,
            outstanding: txs.iter().map(|t| t.hash()).collect(),
            last_poll: Instant::now(),
        };

        let t0 = Instant::now();
        for (ci, chunk) in txs.chunks(batch_size).enumerate() {
            let replies = if chunk.len() == 1 {
                vec![self.client.submit_raw(&chunk[0]).map(|_| Value::Null)]
            } else {
                let calls: Vec<(&str, Value)> = chunk.iter().map(|t| ("tx_submitRaw", json!({ "tx": t }))).collect();
                self.client.batch(&calls).map_err(transport)?
            };
            for (j, r) in replies.into_iter().enumerate() {
                match r {
                    Ok(_) => {}
                    Err(RpcCallError::Transport(m)) => return Err(StressError::Transport(m)),
                    Err(e) => {
                        return Err(StressError::Rejected {
                            index: ci * batch_size + j,
                            hash: chunk[j].hash(),
                            cause: e.to_string(),
                        })
                    }
                }
            }
            if tracker.last_poll.elapsed() >= self.poll_interval {
                tracker.poll(&self.client)?;
            }
        }
        let last_inclusion = loop {
            if tracker.outstanding.is_empty() {
                break Instant::now();
            }
            if t0.elapsed() > self.deadline {
                return Err(StressError::Stalled(format!(
                    "{} transactions not included",
                    tracker.outstanding.len()
                )));
            }
            std::thread::sleep(self.poll_interval.saturating_sub(tracker.last_poll.elapsed()));
            tracker.poll(&self.client)?;
        };

        // re-read the canonical range in case a block was replaced meanwhile
        let mut seen = HashSet::with_capacity(n_tx);
        let mut block_tx_counts = Vec::new();
        for n in start_number + 1..=tracker.head {
            let b = self
                .client
                .block(n)
                .map_err(transport)?
                .ok_or_else(|| StressError::Stalled(format!("block {n} vanished")))?;
            block_tx_counts.push(b.transactions().len());
            for tx in b.transactions() {
                if !seen.insert(tx.hash()) {
                    return Err(StressError::DuplicateInclusion(tx.hash()));
                }
            }
        }
        if let Some(missing) = txs.iter().find(|t| !seen.contains(&t.hash())) {
            return Err(StressError::Stalled(format!("{} no longer on the canonical chain", missing.hash())));
        }
        let t_t_s = last_inclusion.duration_since(t0).as_secs_f64();
        let run = StressRun {
            repeat,
            n_tx,
            first_submit_ms: 0.0,
            last_inclusion_ms: t_t_s * 1000.0,
            t_t_s,
            block_tx_counts,
            tx_hashes: txs.iter().map(|t| t.hash()).collect(),
        };
        self.submitted.push(txs);
        Ok(run)
    }
}
