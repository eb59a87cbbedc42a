//! The 16-node, 4-sealer PoA network on the discrete-event simulator.
//!
//! `cargo run --release --example sim_network -- [seed]`

use credchain::bench::{transfer_workload, workload_senders, SimNetworkSpec};
use credchain::chain::{ConsensusKind, DEFAULT_BLOCK_GAS_LIMIT};

fn main() {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let spec = SimNetworkSpec::default();
    let mut sim = spec.build_sim(ConsensusKind::PoA, DEFAULT_BLOCK_GAS_LIMIT, seed).expect("sim");
    let txs = transfer_workload(spec.chain_id, 1000, &workload_senders(spec.n_senders), &[]);
    for (i, tx) in txs.into_iter().enumerate() {
        sim.submit_tx(i % sim.len(), tx).expect("accepted");
        sim.run_for(5);
    }
    let ok = sim.run_until_pred(sim.now_ms() + 600_000, |s| s.nodes().iter().all(|n| n.mempool().is_empty()));
    sim.quiesce();
    let head = sim.node(0);
    println!("drained {ok} at t={}ms, head #{} {}", sim.now_ms(), head.head_number(), head.head_hash());
    println!("converged: {}", sim.converged());
    println!("messages delivered {} dropped {}", sim.stats().delivered, sim.stats().dropped);
}
