use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use credchain::bench::devnet::DevnetSpec;
use credchain::bench::{
    consensus_compare, cpu_monitor, emit_csv, flood, gas_sweep, stress_write, ConsensusChoice, FloodConfig,
    RpcStressTarget, SimNetworkSpec, StressReport, DEFAULT_REPEATS,
};
use credchain::chain::{ConsensusKind, DEFAULT_BLOCK_GAS_LIMIT, DEFAULT_POA_PERIOD_S};
use credchain::crypto::{Digest32, KeyPair};
use credchain::node::runtime::{calibrated_difficulty, NodeConfig};
use credchain::service::launch::{NodeService, ServiceOptions};

#[derive(Parser)]
#[command(name = "bench", about = "credchain node and measurement harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Consensus {
    Pow,
    Poa,
    Both,
}

impl From<Consensus> for ConsensusChoice {
    fn from(c: Consensus) -> Self {
        match c {
            Consensus::Pow => ConsensusChoice::Pow,
            Consensus::Poa => ConsensusChoice::Poa,
            Consensus::Both => ConsensusChoice::Both,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Open-loop read flood against a JSON-RPC endpoint.
    Flood {
        #[arg(long, default_value = "http://127.0.0.1:8545/rpc")]
        endpoint: String,
        #[arg(long)]
        rps: u64,
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long, default_value = "registry_check")]
        method: String,
        /// JSON object of params; defaults to a zero hash for registry_check.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-request log.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Write throughput. Simulated 16-node network unless --endpoint is given.
    Stress {
        #[arg(long, default_value_t = 1000)]
        txs: usize,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = Consensus::Poa)]
        consensus: Consensus,
        #[arg(long, default_value_t = DEFAULT_BLOCK_GAS_LIMIT)]
        gas_limit: u64,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 1337)]
        chain_id: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gas-limit sweep on fresh simulated networks.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1000000,5000000,20000000,60000000")]
        limits: Vec<u64>,
        #[arg(long, default_value_t = 1000)]
        txs: usize,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = Consensus::Poa)]
        consensus: Consensus,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PoW against PoA at several workload sizes.
    Compare {
        #[arg(long, value_enum, default_value_t = Consensus::Both)]
        consensus: Consensus,
        #[arg(long, value_delimiter = ',', default_value = "250,500,750,1000")]
        txs: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_BLOCK_GAS_LIMIT)]
        gas_limit: u64,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Samples a process's CPU use (100 = one core).
    Cpu {
        #[arg(long)]
        pid: u32,
        #[arg(long, default_value_t = 1.0)]
        interval: f64,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes genesis.json, node.json and admin.key for a one-node network.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Consensus::Poa)]
        consensus: Consensus,
        #[arg(long, default_value_t = DEFAULT_BLOCK_GAS_LIMIT)]
        gas_limit: u64,
        #[arg(long, default_value_t = DEFAULT_POA_PERIOD_S)]
        period: u64,
        /// PoW difficulty; measured on this machine when absent.
        #[arg(long)]
        difficulty: Option<u64>,
        #[arg(long, default_value = "127.0.0.1:30303")]
        listen: SocketAddr,
    },
    /// Runs a node with the service and its JSON-RPC server.
    Node {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8545")]
        rpc: SocketAddr,
        /// File holding an administrator secret key in hex; repeatable.
        #[arg(long = "admin-key-file")]
        admin_key_files: Vec<PathBuf>,
        #[arg(long)]
        docstore: Option<PathBuf>,
        #[arg(long)]
        cors: Option<String>,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed_records: usize,
    },
}

fn write_or_print(reports: &[StressReport], out: Option<&PathBuf>) -> Result<()> {
    if let Some(p) = out {
        emit_csv(reports, p).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("consensus,gas_limit,n_tx,t_t_s,tps,repeats,tps_stddev");
    for r in reports {
        println!(
            "{},{},{},{:.3},{:.3},{},{:.3}",
            r.consensus, r.gas_limit, r.n_tx, r.t_t_s, r.tps, r.repeats, r.tps_stddev
        );
    }
    Ok(())
}

fn single(c: Consensus) -> Result<ConsensusKind> {
    match c {
        Consensus::Pow => Ok(ConsensusKind::PoW),
        Consensus::Poa => Ok(ConsensusKind::PoA),
        Consensus::Both => bail!("choose pow or poa"),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Flood {
            endpoint,
            rps,
            duration,
            method,
            params,
            out,
            raw,
        } => {
            let params: Value = match params {
                Some(p) => serde_json::from_str(&p).context("--params")?,
                None if method == "registry_check" => json!({ "hash": Digest32([0; 32]) }),
                None => json!({}),
            };
            let report = flood(&FloodConfig {
                endpoint,
                method,
                params,
                target_rps: rps,
                duration_s: duration,
            })?;
            if let Some(p) = raw {
                report.write_raw(&p)?;
            }
            if let Some(p) = out {
                emit_csv(std::slice::from_ref(&report), &p)?;
            }
            println!("target_rps,duration_s,achieved_rps,p50_ms,p90_ms,p99_ms,errors");
            println!(
                "{},{},{:.3},{:.3},{:.3},{:.3},{}",
                report.target_rps,
                report.duration_s,
                report.achieved_rps,
                report.p50_ms,
                report.p90_ms,
                report.p99_ms,
                report.errors
            );
        }
        Cmd::Stress {
            txs,
            repeats,
            batch,
            consensus,
            gas_limit,
            endpoint,
            chain_id,
            out,
        } => {
            let kind = single(consensus)?;
            let report = match endpoint {
                Some(url) => {
                    let mut t = RpcStressTarget::new(url, chain_id, kind, gas_limit);
                    stress_write(&mut t, txs, batch, repeats)?
                }
                None => {
                    let mut t = credchain::bench::SimNetwork::new(SimNetworkSpec::default(), kind, gas_limit);
                    stress_write(&mut t, txs, batch, repeats)?
                }
            };
            write_or_print(&[report], out.as_ref())?;
        }
        Cmd::Sweep {
            limits,
            txs,
            repeats,
            consensus,
            out,
        } => {
            let spec = SimNetworkSpec::default();
            let mut reports = Vec::new();
            for kind in ConsensusChoice::from(consensus).kinds() {
                reports.extend(gas_sweep(&spec, kind, &limits, txs, repeats)?);
            }
            write_or_print(&reports, out.as_ref())?;
        }
        Cmd::Compare {
            consensus,
            txs,
            gas_limit,
            repeats,
            out,
        } => {
            let pair = match consensus {
                Consensus::Both => (ConsensusKind::PoW, ConsensusKind::PoA),
                one => (single(one)?, single(one)?),
            };
            let points = consensus_compare(&SimNetworkSpec::default(), pair, &txs, gas_limit, repeats)?;
            let reports: Vec<StressReport> = points.iter().flat_map(|p| [p.left.clone(), p.right.clone()]).collect();
            write_or_print(&reports, out.as_ref())?;
            for p in &points {
                println!("# n_tx {} ratio {}/{} {:.3}", p.n_tx, pair.1, pair.0, p.ratio);
            }
        }
        Cmd::Cpu {
            pid,
            interval,
            duration,
            out,
        } => {
            let samples = cpu_monitor(pid, interval, duration)?;
            if let Some(p) = out {
                emit_csv(&samples, &p)?;
            }
            println!("t_s,percent_one_core");
            for s in &samples {
                println!("{:.3},{:.3}", s.t_s, s.percent_one_core);
            }
        }
        Cmd::Init {
            dir,
            consensus,
            gas_limit,
            period,
            difficulty,
            listen,
        } => {
            let kind = single(consensus)?;
            let pow_difficulty = match (kind, difficulty) {
                (ConsensusKind::PoW, None) => Some(calibrated_difficulty(1, period)),
                (_, d) => d,
            };
            let spec = DevnetSpec {
                consensus: kind,
                gas_limit,
                period_s: period,
                pow_difficulty,
                ..DevnetSpec::default()
            };
            let path = spec.write(&dir, listen)?;
            println!("{}", path.display());
        }
        Cmd::Node {
            config,
            rpc,
            admin_key_files,
            docstore,
            cors,
            workers,
            seed_records,
        } => {
            let (cfg, genesis) = NodeConfig::load(&config)?;
            let admin_keys = admin_key_files
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    KeyPair::from_secret_hex(text.trim()).with_context(|| format!("key in {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let opts = ServiceOptions {
                rpc_listen: rpc,
                admin_keys,
                docstore,
                cors_origin: cors,
                workers,
                seed_records,
            };
            let ns = NodeService::start(&cfg, genesis, &opts)?;
            let mut stdout = std::io::stdout();
            writeln!(stdout, "p2p {}", ns.handle().local_addr())?;
            writeln!(stdout, "rpc {}", ns.url())?;
            stdout.flush()?;
            // runs until killed; the chain store survives abrupt exits
            loop {
                std::thread::sleep(Duration::from_secs(3600));
            }
        }
    }
    Ok(())
}
