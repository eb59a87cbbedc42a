//! PoW versus PoA write throughput on the simulated 16-node network.
//!
//! `cargo run --release --example consensus_compare -- [repeats]`

use std::time::Instant;

use credchain::bench::{consensus_compare, SimNetworkSpec};
use credchain::chain::{ConsensusKind, DEFAULT_BLOCK_GAS_LIMIT};

fn main() {
    let repeats = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let spec = SimNetworkSpec::default();
    let t = Instant::now();
    let points = consensus_compare(
        &spec,
        (ConsensusKind::PoW, ConsensusKind::PoA),
        &[250, 500, 750, 1000],
        DEFAULT_BLOCK_GAS_LIMIT,
        repeats,
    )
    .expect("comparison");
    println!("n_tx  pow_tps  poa_tps  poa/pow");
    for p in &points {
        println!("{:>4}  {:>7.3}  {:>7.3}  {:>7.3}", p.n_tx, p.left.tps, p.right.tps, p.ratio);
    }
    println!("wall {:.1}s", t.elapsed().as_secs_f64());
}
