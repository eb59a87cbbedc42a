//! PoA write throughput across block gas limits on the simulated network.
//!
//! `cargo run --release --example gas_sweep -- [repeats]`

use credchain::bench::{gas_sweep, SimNetworkSpec};
use credchain::chain::ConsensusKind;

fn main() {
    let repeats = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let limits = [1_000_000, 5_000_000, 20_000_000, 60_000_000];
    let reports = gas_sweep(&SimNetworkSpec::default(), ConsensusKind::PoA, &limits, 1000, repeats).expect("sweep");
    println!("gas_limit   t_t_s     tps  max_block_txs");
    for r in &reports {
        println!("{:>9}  {:>6.2}  {:>6.2}  {:>5}", r.gas_limit, r.t_t_s, r.tps, r.max_block_txs());
    }
}
