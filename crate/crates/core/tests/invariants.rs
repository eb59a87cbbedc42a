use std::cmp::Ordering;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use credchain::bench::flood::{LatencyReport, LatencySample};
use credchain::chain::{BlockHeader, Seal};
use credchain::consensus::{compare_heads, fork_choice, pow_seal, pow_verify, ChainWeight};
use credchain::crypto::{Address, Digest32, KeyPair};
use credchain::docstore::{fixtures, materialize, record_hash, AccessControl, DocStore};
use credchain::registry::RegistryState;

fn head() -> impl Strategy<Value = (ChainWeight, Digest32)> {
    // small ranges so ties on weight are common
    (0u128..4, 0u8..4).prop_map(|(w, h)| (ChainWeight { total_difficulty: w }, Digest32([h; 32])))
}

proptest! {
    #[test]
    fn fork_choice_is_a_total_order(a in head(), b in head(), c in head()) {
        prop_assert_eq!(compare_heads(a, b), compare_heads(b, a).reverse());
        prop_assert_eq!(compare_heads(a, b) == Ordering::Equal, a == b);
        if compare_heads(a, b) != Ordering::Less && compare_heads(b, c) != Ordering::Less {
            prop_assert_ne!(compare_heads(a, c), Ordering::Less);
        }
    }

    #[test]
    fn fork_choice_ignores_candidate_order(mut heads in prop::collection::vec(head(), 1..12)) {
        let first = fork_choice(heads.iter().copied());
        heads.reverse();
        prop_assert_eq!(first, fork_choice(heads.iter().copied()));
        let best = first.unwrap();
        prop_assert!(heads.iter().all(|h| compare_heads(best, *h) != Ordering::Less));
    }

    #[test]
    fn pow_seal_verifies(number in 1u64..1000, ts in any::<u64>(), parent in any::<[u8; 32]>(), di in 0usize..4) {
        let difficulty = [1u64, 2, 16, 256][di];
        let header = BlockHeader {
            number,
            parent_hash: Digest32(parent),
            timestamp: ts,
            gas_limit: 1_000_000,
            gas_used: 0,
            tx_root: Digest32([0; 32]),
            sealer: Address([7; 20]),
            difficulty,
            seal: Seal::None,
        };
        let (sealed, _) = pow_seal(&header, difficulty, 0, None).unwrap().unwrap();
        prop_assert!(pow_verify(&sealed));
    }

    #[test]
    fn percentiles_are_monotone(lat in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..500.0), 0..300)) {
        let samples = lat
            .iter()
            .enumerate()
            .map(|(i, l)| LatencySample { index: i as u64, scheduled_ms: i as f64, latency_ms: *l, warmup: i < 20 })
            .collect();
        let r = LatencyReport::from_samples(100, 3, samples);
        prop_assert!(r.p50_ms <= r.p90_ms && r.p90_ms <= r.p99_ms);
        let s = r.steady_state();
        prop_assert!(s.p50_ms <= s.p90_ms && s.p90_ms <= s.p99_ms);
    }

    #[test]
    fn record_hash_ignores_only_tx_hash(seed in any::<u64>(), field in 0usize..6, tx in any::<[u8; 32]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = fixtures::random_record(&mut rng, Address([1; 20]));
        let h = record_hash(&rec);
        let mut anchored = rec.clone();
        anchored.tx_hash = Some(Digest32(tx));
        prop_assert_eq!(record_hash(&anchored), h);

        let mut edited = rec.clone();
        match field {
            0 => edited.name.push('x'),
            1 => edited.surname.push('x'),
            2 => edited.degree.push('x'),
            3 => edited.id.0[0] ^= 1,
            4 => edited.subjects[0].mark = if rec.subjects[0].mark == "5" { "6".into() } else { "5".into() },
            _ => edited.subjects[1].subject.push('x'),
        }
        prop_assert_ne!(record_hash(&edited), h);
    }

    #[test]
    fn registry_membership_is_permanent(ops in prop::collection::vec((0u8..16, 0u64..50), 1..80)) {
        let mut reg = RegistryState::new();
        let mut seen = Vec::new();
        for (i, (h, block)) in ops.iter().enumerate() {
            reg.store(Digest32([*h; 32]), *block + i as u64);
            seen.push(Digest32([*h; 32]));
            prop_assert!(seen.iter().all(|d| reg.check(d)));
        }
        let mut distinct = seen.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(reg.count(), distinct.len());
        let rebuilt = RegistryState::from_snapshot(&reg.snapshot());
        prop_assert_eq!(rebuilt.snapshot(), reg.snapshot());
    }

    #[test]
    fn docstore_replay_and_unauthorized_writes(seed in any::<u64>(), steps in prop::collection::vec((0u8..4, 0u64..5), 1..30)) {
        let admin = KeyPair::dev("inv-admin", 0);
        let outsider = KeyPair::dev("inv-outsider", 0);
        let mut store = DocStore::in_memory(AccessControl::new([admin.address()], [admin.address()]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (op, who) in steps {
            let student = KeyPair::dev("inv-student", who).address();
            let before = store.view_digest();
            match op {
                0 | 1 => {
                    store.put_record(fixtures::random_record(&mut rng, student), &admin).unwrap();
                }
                2 => {
                    let _ = store.delete_record(&student, &admin);
                }
                _ => {
                    prop_assert!(store.put_record(fixtures::random_record(&mut rng, student), &outsider).is_err());
                    prop_assert!(store.delete_record(&student, &outsider).is_err());
                    prop_assert_eq!(store.view_digest(), before);
                }
            }
        }
        let log = store.log();
        for k in 0..=log.len() {
            prop_assert_eq!(materialize(&log[..k]), materialize(&log[..k]));
        }
        let full = materialize(log);
        prop_assert_eq!(full.len(), store.records().count());
        for r in store.records() {
            prop_assert_eq!(full.get(&r.public_key), Some(r));
        }
    }
}
