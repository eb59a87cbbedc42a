//! Open-loop read flood against an in-process node.
//!
//! `cargo run --release --example flood_latency -- [rps] [seconds]`

use serde_json::json;

use credchain::bench::devnet::{devnet_admin, DevnetSpec};
use credchain::bench::{flood, FloodConfig};
use credchain::crypto::Digest32;
use credchain::node::runtime::NodeConfig;
use credchain::service::launch::{NodeService, ServiceOptions};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("number"));
    let rps = args.next().unwrap_or(100);
    let secs = args.next().unwrap_or(5);
    let dir = tempfile::tempdir().expect("tempdir");
    let path = DevnetSpec::default()
        .write(dir.path(), "127.0.0.1:0".parse().unwrap())
        .expect("write devnet");
    let (cfg, genesis) = NodeConfig::load(&path).expect("load");
    let opts = ServiceOptions {
        admin_keys: vec![devnet_admin()],
        ..ServiceOptions::default()
    };
    let ns = NodeService::start(&cfg, genesis, &opts).expect("start");
    let report = flood(&FloodConfig {
        endpoint: ns.url(),
        method: "registry_check".into(),
        params: json!({ "hash": Digest32([0; 32]) }),
        target_rps: rps,
        duration_s: secs,
    })
    .expect("flood");
    let steady = report.steady_state();
    println!("rps {rps} for {secs}s: achieved {:.1}, errors {}", report.achieved_rps, report.errors);
    println!("all     p50 {:.3} p90 {:.3} p99 {:.3} ms", report.p50_ms, report.p90_ms, report.p99_ms);
    println!("steady  p50 {:.3} p90 {:.3} p99 {:.3} ms", steady.p50_ms, steady.p90_ms, steady.p99_ms);
    ns.shutdown();
}
