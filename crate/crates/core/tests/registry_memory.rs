use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use credchain::chain::{ChainConfig, Genesis, TxRequest, GAS_PER_STORED_HASH, TX_BASE_GAS};
use credchain::crypto::{Digest32, KeyPair};
use credchain::node::sim::{Sim, SimConfig};
use credchain::node::Role;

fn resident_kib() -> u64 {
    let status = std::fs::read_to_string("/proc/self/status").expect("procfs");
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
        .expect("VmRSS line")
}

#[test]
fn node_with_100k_registry_entries_stays_under_1_gib() {
    const ENTRIES: usize = 100_000;
    let sealer = KeyPair::dev("sealer", 0);
    let admin = KeyPair::dev("admin", 0);
    let gas_limit = 60_000_000;
    let mut config = ChainConfig::poa(3, vec![sealer.address()]);
    config.block_gas_limit = gas_limit;
    config.poa_period_s = 1;
    let genesis = Genesis {
        config,
        timestamp: 0,
        alloc: [(admin.address(), 1 << 40)].into_iter().collect(),
    };
    let mut sim = Sim::new(&genesis, vec![Role::Sealer(sealer), Role::Observer], SimConfig::default()).unwrap();

    let per_tx = ((gas_limit - TX_BASE_GAS) / GAS_PER_STORED_HASH) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hashes = Vec::with_capacity(ENTRIES);
    for _ in 0..ENTRIES {
        let mut h = [0u8; 32];
        rng.fill_bytes(&mut h);
        hashes.push(Digest32(h));
    }
    for (nonce, chunk) in hashes.chunks(per_tx).enumerate() {
        let tx = TxRequest::store_batch(admin.address(), nonce as u64, chunk.to_vec()).sign(&admin, 3);
        sim.submit_tx(0, tx).unwrap();
    }
    let done = sim.run_until_pred(600_000, |s| {
        s.nodes().iter().all(|n| n.head_state().registry.count() == ENTRIES)
    });
    assert!(done, "registry filled on both nodes");
    for h in hashes.iter().step_by(997) {
        assert!(sim.node(1).head_state().registry.anchored_in(h).is_some());
    }
    let kib = resident_kib();
    eprintln!("resident {} MiB with {} entries on 2 nodes", kib / 1024, ENTRIES);
    assert!(kib < 1024 * 1024, "resident set {kib} KiB");
}
