//! Four nodes over loopback TCP, two of them PoA sealers.
//!
//! `cargo run --example tcp_localnet`

use std::time::Duration;

use credchain::chain::{ChainConfig, Genesis, TxRequest};
use credchain::crypto::KeyPair;
use credchain::node::runtime::LocalNet;
use credchain::node::Role;

fn main() {
    let sealers = [KeyPair::dev("sealer", 0), KeyPair::dev("sealer", 1)];
    let alice = KeyPair::dev("alice", 0);
    let mut config = ChainConfig::poa(9, sealers.iter().map(|k| k.address()).collect());
    config.poa_period_s = 1;
    let genesis = Genesis {
        config,
        timestamp: 0,
        alloc: [(alice.address(), 1_000_000)].into_iter().collect(),
    };
    let roles = vec![
        Role::Observer,
        Role::Observer,
        Role::Sealer(sealers[0].clone()),
        Role::Sealer(sealers[1].clone()),
    ];
    let net = LocalNet::start(&genesis, roles, None).expect("start");
    assert!(net.wait_connected(Duration::from_secs(10)));

    let bob = KeyPair::dev("bob", 0).address();
    let mut hashes = Vec::new();
    for nonce in 0..20 {
        let tx = TxRequest::transfer(alice.address(), nonce, bob, 1).sign(&alice, 9);
        hashes.push(net.handle(0).submit_tx(tx).expect("running").expect("accepted"));
    }
    let done = net
        .handle(1)
        .wait_for(Duration::from_secs(30), |n| hashes.iter().all(|h| n.receipt(h).is_some()));
    println!("all 20 included as seen by node 1: {done}");
    std::thread::sleep(Duration::from_secs(2));
    for i in 0..4 {
        let h = net.handle(i);
        let n = h.read();
        println!("node {i} {} peers, head #{} {}", h.peer_count(), n.head_number(), n.head_hash());
    }
    net.shutdown();
}
