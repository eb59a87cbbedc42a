//! Measurement harness: latency flooding, write throughput, gas-limit
//! sweeps, consensus comparison and CPU sampling, with CSV output.

pub mod cpu;
pub mod devnet;
pub mod flood;
pub mod rpc;
pub mod stress;

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::ConsensusKind;

pub use cpu::{cpu_monitor, cpu_monitor_until, CpuError, CpuSample};
pub use flood::{flood, FloodConfig, FloodError, LatencyReport, LatencySample, WARMUP_S};
pub use rpc::{RpcCallError, RpcClient, RpcStressTarget};
pub use stress::{
    consensus_compare, gas_sweep, stress_write, transfer_workload, ComparePoint, NetworkFactory, SimNetwork,
    SimNetworkSpec, StressError, StressReport, StressRun, StressTarget, workload_senders,
};

pub const DEFAULT_REPEATS: usize = 20;

/// Nearest-rank percentile: the `ceil(q·N/100)`-th smallest sample.
/// `sorted` must be ascending. Returns `None` for an empty slice.
pub fn percentile(sorted: &[f64], q: u32) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = ((q as u64 * n).div_ceil(100)).clamp(1, n);
    Some(sorted[(rank - 1) as usize])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two samples.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// A report type with a fixed CSV schema.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn row(&self) -> Vec<String>;
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

impl CsvRow for LatencyReport {
    fn header() -> &'static [&'static str] {
        &["target_rps", "duration_s", "achieved_rps", "p50_ms", "p90_ms", "p99_ms", "errors"]
    }
    fn row(&self) -> Vec<String> {
        vec![
            self.target_rps.to_string(),
            self.duration_s.to_string(),
            f3(self.achieved_rps),
            f3(self.p50_ms),
            f3(self.p90_ms),
            f3(self.p99_ms),
            self.errors.to_string(),
        ]
    }
}

impl CsvRow for StressReport {
    fn header() -> &'static [&'static str] {
        &["consensus", "gas_limit", "n_tx", "t_t_s", "tps", "repeats", "tps_stddev"]
    }
    fn row(&self) -> Vec<String> {
        vec![
            self.consensus.to_string(),
            self.gas_limit.to_string(),
            self.n_tx.to_string(),
            f3(self.t_t_s),
            f3(self.tps),
            self.repeats.to_string(),
            f3(self.tps_stddev),
        ]
    }
}

impl CsvRow for CpuSample {
    fn header() -> &'static [&'static str] {
        &["t_s", "percent_one_core"]
    }
    fn row(&self) -> Vec<String> {
        vec![f3(self.t_s), f3(self.percent_one_core)]
    }
}

/// Writes `reports` with a header row, in the given order.
pub fn emit_csv<R: CsvRow>(reports: &[R], path: impl AsRef<Path>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(R::header())?;
    for r in reports {
        w.write_record(r.row())?;
    }
    w.flush()
}

/// Label used in CSV output and CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusChoice {
    Pow,
    Poa,
    Both,
}

impl ConsensusChoice {
    pub fn kinds(self) -> Vec<ConsensusKind> {
        match self {
            ConsensusChoice::Pow => vec![ConsensusKind::PoW],
            ConsensusChoice::Poa => vec![ConsensusKind::PoA],
            ConsensusChoice::Both => vec![ConsensusKind::PoW, ConsensusKind::PoA],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50), Some(50.0));
        assert_eq!(percentile(&xs, 90), Some(90.0));
        assert_eq!(percentile(&xs, 99), Some(99.0));
        assert_eq!(percentile(&[7.0], 50), Some(7.0));
        assert_eq!(percentile(&[7.0], 99), Some(7.0));
        assert_eq!(percentile(&[], 50), None);
        // ceil(50·3/100) = 2
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 50), Some(2.0));
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138).abs() < 1e-3);
        assert_eq!(stddev(&[3.0]), 0.0);
    }

    fn latency(p: f64) -> LatencyReport {
        LatencyReport {
            target_rps: 100,
            duration_s: 10,
            achieved_rps: 99.5,
            p50_ms: p,
            p90_ms: p + 1.0,
            p99_ms: p + 2.0,
            errors: 0,
            samples: Vec::new(),
        }
    }

    #[test]
    fn csv_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        emit_csv::<LatencyReport>(&[], &empty).unwrap();
        assert_eq!(
            std::fs::read_to_string(&empty).unwrap(),
            "target_rps,duration_s,achieved_rps,p50_ms,p90_ms,p99_ms,errors\n"
        );
        let one = dir.path().join("one.csv");
        emit_csv(&[latency(1.25)], &one).unwrap();
        let text = std::fs::read_to_string(&one).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 7);
        assert_eq!(lines[1], "100,10,99.500,1.250,2.250,3.250,0");
        let again = dir.path().join("again.csv");
        emit_csv(&[latency(1.25)], &again).unwrap();
        assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&again).unwrap());

        let cpu = dir.path().join("cpu.csv");
        emit_csv(
            &[CpuSample {
                t_s: 1.0,
                percent_one_core: 99.5,
            }],
            &cpu,
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(&cpu).unwrap(), "t_s,percent_one_core\n1.000,99.500\n");
    }
}
