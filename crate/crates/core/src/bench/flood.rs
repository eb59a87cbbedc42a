//! Open-loop read flooding. Requests leave on a fixed schedule whatever the
//! responses do, and latency is measured from the scheduled send time.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::time::Instant;

use super::percentile;

/// Samples scheduled in the first seconds are flagged as warm-up.
pub const WARMUP_S: f64 = 2.0;
pub const REQUEST_TIMEOUT_S: u64 = 5;

#[derive(Debug, Clone)]
pub struct FloodConfig {
    /// Full URL of the JSON-RPC endpoint, e.g. `http://127.0.0.1:8545/rpc`.
    pub endpoint: String,
    pub method: String,
    pub params: Value,
    pub target_rps: u64,
    pub duration_s: u64,
}

#[derive(Debug, Error)]
pub enum FloodError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("target_rps and duration_s must be positive")]
    BadSchedule,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("raw log: {0}")]
    RawLog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub index: u64,
    /// Scheduled send time relative to the start of the run.
    pub scheduled_ms: f64,
    /// `None` for timeouts and failed or error responses.
    pub latency_ms: Option<f64>,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub target_rps: u64,
    pub duration_s: u64,
    pub achieved_rps: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub errors: u64,
    #[serde(skip)]
    pub samples: Vec<LatencySample>,
}

impl LatencyReport {
    /// Builds the summary from raw samples; warm-up samples are included.
    pub fn from_samples(target_rps: u64, duration_s: u64, samples: Vec<LatencySample>) -> Self {
        let mut ok: Vec<f64> = samples.iter().filter_map(|s| s.latency_ms).collect();
        ok.sort_by(f64::total_cmp);
        let errors = samples.iter().filter(|s| s.latency_ms.is_none()).count() as u64;
        let p = |q| percentile(&ok, q).unwrap_or(0.0);
        LatencyReport {
            target_rps,
            duration_s,
            achieved_rps: ok.len() as f64 / duration_s.max(1) as f64,
            p50_ms: p(50),
            p90_ms: p(90),
            p99_ms: p(99),
            errors,
            samples,
        }
    }

    /// Percentiles over samples outside the warm-up window.
    pub fn steady_state(&self) -> LatencyReport {
        let kept = self.samples.iter().filter(|s| !s.warmup).copied().collect();
        LatencyReport::from_samples(self.target_rps, self.duration_s, kept)
    }

    /// Raw log: `index,scheduled_ms,latency_ms,ok,warmup`, one row per request.
    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<(), FloodError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| FloodError::RawLog(e.to_string()))?;
        let io = |e: csv::Error| FloodError::RawLog(e.to_string());
        w.write_record(["index", "scheduled_ms", "latency_ms", "ok", "warmup"]).map_err(io)?;
        for s in &self.samples {
            w.write_record([
                s.index.to_string(),
                format!("{:.3}", s.scheduled_ms),
                s.latency_ms.map_or(String::new(), |l| format!("{l:.6}")),
                (s.latency_ms.is_some() as u8).to_string(),
                (s.warmup as u8).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_raw(path: impl AsRef<Path>) -> Result<Vec<LatencySample>, FloodError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| FloodError::RawLog(e.to_string()))?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| FloodError::RawLog(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |s: &str| s.parse::<f64>().map_err(|e| FloodError::RawLog(e.to_string()));
            out.push(LatencySample {
                index: field(0).parse().map_err(|_| FloodError::RawLog("index".into()))?,
                scheduled_ms: num(field(1))?,
                latency_ms: if field(3) == "1" { Some(num(field(2))?) } else { None },
                warmup: field(4) == "1",
            });
        }
        Ok(out)
    }
}

fn rpc_body(id: u64, method: &str, params: &Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params})
}

async fn one_request(client: &reqwest::Client, endpoint: &str, body: &Value) -> bool {
    let Ok(resp) = client.post(endpoint).json(body).send().await else {
        return false;
    };
    if !resp.status().is_success() {
        return false;
    }
    match resp.json::<Value>().await {
        Ok(v) => v.get("result").is_some() && v.get("error").is_none(),
        Err(_) => false,
    }
}

pub async fn flood_async(cfg: &FloodConfig) -> Result<LatencyReport, FloodError> {
    if cfg.target_rps == 0 || cfg.duration_s == 0 {
        return Err(FloodError::BadSchedule);
    }
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(REQUEST_TIMEOUT_S))
        .pool_max_idle_per_host(256)
        .build()
        .map_err(|e| FloodError::Unreachable(e.to_string()))?;
    // probe once so a dead endpoint fails fast instead of logging only errors
    client
        .post(&cfg.endpoint)
        .json(&rpc_body(0, &cfg.method, &cfg.params))
        .send()
        .await
        .map_err(|e| FloodError::Unreachable(e.to_string()))?;

    let client = Arc::new(client);
    let endpoint: Arc<str> = cfg.endpoint.as_str().into();
    let total = cfg.target_rps * cfg.duration_s;
    let period = Duration::from_secs_f64(1.0 / cfg.target_rps as f64);
    let start = Instant::now() + Duration::from_millis(10);
    let mut tasks = tokio::task::JoinSet::new();
    for i in 0..total {
        let scheduled = start + period.mul_f64(i as f64);
        tokio::time::sleep_until(scheduled).await;
        let client = client.clone();
        let endpoint = endpoint.clone();
        let body = rpc_body(i + 1, &cfg.method, &cfg.params);
        tasks.spawn(async move {
            let ok = one_request(&client, &endpoint, &body).await;
            let latency = Instant::now().duration_since(scheduled).as_secs_f64() * 1000.0;
            (i, scheduled.duration_since(start).as_secs_f64() * 1000.0, ok.then_some(latency))
        });
    }
    let mut samples = Vec::with_capacity(total as usize);
    while let Some(r) = tasks.join_next().await {
        let (index, scheduled_ms, latency_ms) = r.unwrap_or((u64::MAX, 0.0, None));
        samples.push(LatencySample {
            index,
            scheduled_ms,
            latency_ms,
            warmup: scheduled_ms < WARMUP_S * 1000.0,
        });
    }
    samples.sort_by_key(|s| s.index);
    Ok(LatencyReport::from_samples(cfg.target_rps, cfg.duration_s, samples))
}

/// Blocking wrapper that runs the flood on its own runtime.
pub fn flood(cfg: &FloodConfig) -> Result<LatencyReport, FloodError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    rt.block_on(flood_async(cfg))
}
