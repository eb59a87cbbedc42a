use std::collections::BTreeMap;

use super::sim::{Sim, SimConfig, Topology};
use super::*;
use crate::chain::{ChainConfig, TxRequest};
use crate::consensus::pow_seal;

const CHAIN: u64 = 11;

fn sealers(n: u64) -> Vec<KeyPair> {
    (0..n).map(|i| KeyPair::dev("sealer", i)).collect()
}

fn users(n: u64) -> Vec<KeyPair> {
    (0..n).map(|i| KeyPair::dev("user", i)).collect()
}

fn poa_genesis(keys: &[KeyPair]) -> Genesis {
    Genesis {
        config: ChainConfig::poa(CHAIN, keys.iter().map(|k| k.address()).collect()),
        timestamp: 0,
        alloc: users(8).iter().map(|k| (k.address(), 1_000_000_000)).collect(),
    }
}

fn poa_roles(keys: &[KeyPair], observers: usize) -> Vec<Role> {
    let mut roles = vec![Role::Observer; observers];
    roles.extend(keys.iter().cloned().map(Role::Sealer));
    roles
}

fn transfer(k: &KeyPair, nonce: u64) -> SealedTx {
    TxRequest::transfer(k.address(), nonce, Address::default(), 1).sign(k, CHAIN)
}

#[test]
fn tx_reaches_every_peer_once() {
    let keys = sealers(3);
    let g = poa_genesis(&keys);
    let cfg = SimConfig {
        track_gossip: true,
        ..SimConfig::default()
    };
    let mut sim = Sim::new(&g, poa_roles(&keys, 1), cfg).unwrap();
    sim.run_for(100);
    let u = &users(1)[0];
    let tx = transfer(u, 0);
    let (r, out) = {
        let now = sim.now_ms();
        let mut n = Node::new(g.clone(), Role::Observer, 0).unwrap();
        for p in 1..4 {
            n.handle(now, Input::PeerUp(p));
        }
        n.submit_tx(now, tx.clone())
    };
    assert_eq!(r, Ok(tx.hash()));
    // the origin sends exactly one copy per peer
    assert_eq!(out.iter().filter(|o| matches!(o, Output::Send { .. })).count(), 3);

    sim.submit_tx(0, tx.clone()).unwrap();
    sim.run_for(50);
    for i in 0..4 {
        assert!(sim.node(i).mempool().contains(&tx.hash()), "node {i}");
    }
    // flood with dedup: every node forwards once to all but the sender
    let edges = sim.edges() as u64;
    let deliveries = sim.stats().gossip_deliveries[&tx.hash()];
    assert_eq!(deliveries, 3 + 3 * 2);
    assert!(deliveries <= 2 * edges);
    assert_eq!(sim.submit_tx(0, tx), Err(SubmitError::Duplicate));
}

#[test]
fn line_topology_reaches_far_end() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    let cfg = SimConfig {
        topology: Topology::Line,
        track_gossip: true,
        ..SimConfig::default()
    };
    let mut sim = Sim::new(&g, poa_roles(&keys, 3), cfg).unwrap();
    sim.set_producing(3, false);
    let tx = transfer(&users(1)[0], 0);
    sim.submit_tx(0, tx.clone()).unwrap();
    // three hops of at most 10 ms each
    sim.run_for(30);
    assert!(sim.node(3).mempool().contains(&tx.hash()));
    assert!(sim.stats().gossip_deliveries[&tx.hash()] <= 2 * sim.edges() as u64);
}

#[test]
fn gossip_bound_on_random_graphs() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        // random connected graph: a spanning path plus random chords
        let mut edges: Vec<(usize, usize)> = (1..n).map(|b| (b - 1, b)).collect();
        for _ in 0..8 {
            edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
        }
        let cfg = SimConfig {
            topology: Topology::Custom(edges),
            track_gossip: true,
            seed,
            ..SimConfig::default()
        };
        let mut sim = Sim::new(&g, poa_roles(&keys, n - 1), cfg).unwrap();
        sim.set_producing(n - 1, false);
        let u = &users(1)[0];
        for nonce in 0..5 {
            sim.submit_tx((nonce as usize) % n, transfer(u, nonce)).unwrap();
            sim.run_for(200);
        }
        for (_, d) in &sim.stats().gossip_deliveries {
            assert!(*d <= 2 * sim.edges() as u64);
        }
        for i in 0..n {
            assert_eq!(sim.node(i).mempool().len(), 5);
        }
    }
}

#[test]
fn observer_never_produces() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    let mut sim = Sim::new(&g, poa_roles(&keys, 1), SimConfig::default()).unwrap();
    sim.run_until(40_000);
    assert!(sim.node(0).head_number() >= 9);
    assert_eq!(sim.node(0).stats().blocks_produced, 0);
    assert_eq!(sim.node(1).stats().blocks_produced, sim.node(1).head_number());
}

#[test]
fn poa_three_sealers_sixty_seconds() {
    let keys = sealers(3);
    let g = poa_genesis(&keys);
    for seed in 0..5 {
        let cfg = SimConfig {
            seed,
            ..SimConfig::default()
        };
        let mut sim = Sim::new(&g, poa_roles(&keys, 0), cfg).unwrap();
        sim.run_until(60_000);
        sim.quiesce();
        assert!(sim.converged());
        let n = sim.node(0).head_number();
        // 60 s / 4 s period, give or take the boundary block
        assert!((13..=16).contains(&n), "seed {seed}: {n} blocks");
    }
}

#[test]
fn poa_liveness_one_block_per_two_periods() {
    let keys = sealers(4);
    let g = poa_genesis(&keys);
    let mut sim = Sim::new(&g, poa_roles(&keys, 4), SimConfig::default()).unwrap();
    let mut last = 0;
    for step in 1..=30u64 {
        sim.run_until(step * 8_000);
        let h = sim.node(0).head_number();
        assert!(h > last, "stalled at {h} by {} ms", step * 8_000);
        last = h;
    }
}

#[test]
fn pow_single_miner_converges_to_target() {
    let miner = KeyPair::dev("miner", 0).address();
    let g = Genesis {
        config: ChainConfig::pow(CHAIN, 1, 4),
        timestamp: 0,
        alloc: BTreeMap::new(),
    };
    let cfg = SimConfig {
        hashrate: 5.0,
        ..SimConfig::default()
    };
    let mut sim = Sim::new(&g, vec![Role::Miner(miner)], cfg).unwrap();
    assert!(sim.run_until_pred(3_600_000, |s| s.node(0).head_number() >= 40));
    let n = sim.node(0);
    let mut intervals: Vec<u64> = (21..=40)
        .map(|i| {
            let a = n.block_by_number(i - 1).unwrap().header().timestamp;
            let b = n.block_by_number(i).unwrap().header().timestamp;
            b - a
        })
        .collect();
    intervals.sort_unstable();
    let median = intervals[intervals.len() / 2] as f64;
    assert!((2.0..=6.0).contains(&median), "median interval {median}");
}

#[test]
fn import_child_bad_seal_and_orphan() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    let mut producer = Node::new(g.clone(), Role::Sealer(keys[0].clone()), 1).unwrap();
    let mut follower = Node::new(g.clone(), Role::Observer, 2).unwrap();
    // produce two blocks on the producer
    let mut produced = Vec::new();
    for i in 1..=2u64 {
        let out = producer.set_producing(i * 4000, true);
        for o in out {
            if let Output::SetTimer { at_ms, timer } = o {
                producer.handle(at_ms, Input::Timer(timer));
            }
        }
        produced.extend(producer.drain_imported());
    }
    assert_eq!(produced.len(), 2);

    // bad seal: re-sign header with a foreign key
    let mut forged = produced[0].block().clone();
    let outsider = KeyPair::dev("outsider", 0);
    let resigned = outsider.sign(&forged.header.seal_hash());
    if let Seal::Poa { signature } = &mut forged.header.seal {
        *signature = resigned;
    }
    let (r, _) = follower.import_block(10_000, SealedBlock::new(forged));
    assert_eq!(r, ImportResult::Rejected(ImportError::Block(BlockError::BadSeal)));
    assert_eq!(follower.head_number(), 0);

    // orphan first, then parent
    let mut out = Vec::new();
    let r = follower.import(10_000, produced[1].clone(), Some(9), false, &mut out);
    assert_eq!(r, ImportResult::Queued);
    assert!(out.iter().any(|o| matches!(o, Output::Send { to: 9, msg: NetMessage::GetBlocks { .. } })));
    let (r, _) = follower.import_block(10_000, produced[0].clone());
    assert_eq!(r, ImportResult::Imported { new_head: true });
    assert_eq!(follower.head_hash(), produced[1].hash());
    assert_eq!(follower.import_block(10_000, produced[1].clone()).0, ImportResult::Known);
}

#[test]
fn future_block_rejected() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    let mut producer = Node::new(g.clone(), Role::Sealer(keys[0].clone()), 1).unwrap();
    let out = producer.set_producing(100_000, true);
    for o in out {
        if let Output::SetTimer { at_ms, timer } = o {
            producer.handle(at_ms, Input::Timer(timer));
        }
    }
    let b = producer.drain_imported().pop().unwrap();
    assert_eq!(b.header().timestamp, 100);
    let mut follower = Node::new(g, Role::Observer, 2).unwrap();
    let (r, _) = follower.import_block(100_000 - (MAX_FUTURE_DRIFT_S + 1) * 1000, b.clone());
    assert_eq!(r, ImportResult::Rejected(ImportError::FutureBlock));
    assert_eq!(follower.import_block(100_000, b).0, ImportResult::Imported { new_head: true });
}

#[test]
fn pow_bad_difficulty_rejected() {
    let miner = KeyPair::dev("miner", 0).address();
    let g = Genesis {
        config: ChainConfig::pow(CHAIN, 4, 4),
        timestamp: 0,
        alloc: BTreeMap::new(),
    };
    let mut node = Node::new(g.clone(), Role::Observer, 0).unwrap();
    let parent = g.block();
    let a = assemble_block(
        parent.header(),
        parent.hash(),
        &g.state(),
        std::iter::empty(),
        &g.config,
        BlockTemplate {
            timestamp: 1,
            sealer: miner,
            difficulty: 2,
        },
    );
    let (h, _) = pow_seal(&a.block.header, 2, 0, None).unwrap().unwrap();
    let b = SealedBlock::new(Block {
        header: h,
        transactions: vec![],
    });
    assert_eq!(
        node.import_block(5000, b).0,
        ImportResult::Rejected(ImportError::Block(BlockError::BadSeal))
    );
    let (h, _) = pow_seal(&a.block.header, 4, 0, None).unwrap().unwrap();
    let b = SealedBlock::new(Block {
        header: h,
        transactions: vec![],
    });
    assert_eq!(node.import_block(5000, b).0, ImportResult::Imported { new_head: true });
}

#[test]
fn same_seed_same_trace() {
    let keys = sealers(4);
    let g = poa_genesis(&keys);
    let run = |seed| {
        let cfg = SimConfig {
            seed,
            ..SimConfig::default()
        };
        let mut sim = Sim::new(&g, poa_roles(&keys, 4), cfg).unwrap();
        let u = users(2);
        for n in 0..20 {
            sim.submit_tx(0, transfer(&u[(n % 2) as usize], n / 2)).unwrap();
            sim.run_for(700);
        }
        let mut steps = 0;
        while steps < 100 && sim.step() {
            steps += 1;
        }
        let chains: Vec<Vec<Digest32>> = sim.nodes().iter().map(|n| n.canonical_hashes().to_vec()).collect();
        (sim.trace_digest(), chains)
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).0, run(4).0);
}

#[test]
fn txs_included_exactly_once() {
    let keys = sealers(4);
    let g = poa_genesis(&keys);
    let mut sim = Sim::new(&g, poa_roles(&keys, 4), SimConfig::default()).unwrap();
    let u = users(8);
    let mut hashes = Vec::new();
    for n in 0..25u64 {
        for k in &u {
            hashes.push(sim.submit_tx(0, transfer(k, n)).unwrap());
        }
        sim.run_for(50);
    }
    assert!(sim.run_until_pred(120_000, |s| hashes.iter().all(|h| s.node(0).receipt(h).is_some())));
    sim.quiesce();
    assert!(sim.converged());
    let node = sim.node(5);
    let mut counts: HashMap<Digest32, usize> = HashMap::new();
    for i in 0..=node.head_number() {
        let b = node.block_by_number(i).unwrap();
        assert!(b.transactions().len() <= 47);
        for tx in b.transactions() {
            *counts.entry(tx.hash()).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), hashes.len());
    assert!(counts.values().all(|c| *c == 1));
    assert!(sim.nodes().iter().all(|n| n.mempool().is_empty()));
}

#[test]
fn partition_heals_to_heavier_branch() {
    let keys = sealers(4);
    let g = poa_genesis(&keys);
    let mut sim = Sim::new(&g, poa_roles(&keys, 2), SimConfig::default()).unwrap();
    sim.run_until(21_000);
    // nodes 0,2,3,4 hold three sealers; nodes 1,5 hold one
    sim.partition(&[vec![0, 2, 3, 4], vec![1, 5]]);
    let u = users(1);
    sim.submit_tx(1, transfer(&u[0], 0)).unwrap();
    sim.run_until(80_000);
    // the lone sealer manages one block before the recent-signer rule stops it
    assert_eq!(sim.node(1).head_number(), 6);
    let heavy = sim.node(0).head_hash();
    let light = sim.node(1).head_hash();
    assert_ne!(heavy, light);
    assert!(sim.node(0).total_difficulty() > sim.node(1).total_difficulty());
    sim.heal();
    sim.run_for(2_000);
    sim.quiesce();
    assert!(sim.converged());
    assert!(sim.node(1).canonical_hashes().contains(&heavy));
    assert!(sim.node(1).stats().reorgs >= 1);
    // the tx only the minority saw comes back and lands on the winning chain
    sim.nodes().iter().for_each(|n| assert!(n.mempool().len() <= 1));
}

#[test]
fn mismatched_chain_disconnects() {
    let keys = sealers(1);
    let g = poa_genesis(&keys);
    let mut other = g.clone();
    other.config.chain_id = CHAIN + 1;
    let mut a = Node::new(g, Role::Observer, 0).unwrap();
    let b = Node::new(other, Role::Observer, 0).unwrap();
    a.handle(0, Input::PeerUp(1));
    let out = a.handle(
        0,
        Input::Message {
            from: 1,
            msg: NetMessage::Status(b.status()),
        },
    );
    assert!(matches!(out[..], [Output::Disconnect(1)]));
    assert_eq!(a.peers().count(), 0);
}

#[test]
fn role_checks() {
    let keys = sealers(2);
    let g = poa_genesis(&keys[..1]);
    assert!(matches!(
        Node::new(g.clone(), Role::Sealer(keys[1].clone()), 0),
        Err(NodeError::NotASealer)
    ));
    assert!(matches!(
        Node::new(g, Role::Miner(keys[0].address()), 0),
        Err(NodeError::RoleMismatch { .. })
    ));
}

#[test]
fn sixteen_nodes_converge_under_load() {
    let keys = sealers(4);
    let g = poa_genesis(&keys);
    let cfg = SimConfig {
        seed: 42,
        ..SimConfig::default()
    };
    let mut sim = Sim::new(&g, poa_roles(&keys, 12), cfg).unwrap();
    let u = users(8);
    let mut hashes = Vec::new();
    for n in 0..25u64 {
        for k in &u {
            hashes.push(sim.submit_tx((n % 16) as usize, transfer(k, n)).unwrap());
            sim.run_for(3);
        }
    }
    assert!(sim.run_until_pred(300_000, |s| hashes.iter().all(|h| s.node(0).receipt(h).is_some())));
    sim.quiesce();
    assert!(sim.converged());
    assert_eq!(sim.common_prefix_len(), sim.node(0).canonical_hashes().len());
}
