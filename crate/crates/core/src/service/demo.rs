//! A ready-made service on a one-sealer simulated chain with seeded
//! student records, for examples and tests.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{ChainConfig, Genesis};
use crate::crypto::{keccak256, KeyPair};
use crate::docstore::{fixtures, AccessControl, DocStore};
use crate::node::sim::{Sim, SimConfig};
use crate::node::Role;

use super::{ManualClock, Service, ServiceError, Session, SimBackend};

pub const DEMO_CHAIN_ID: u64 = 2024;

pub struct DemoEnv {
    pub svc: Arc<Service>,
    pub backend: SimBackend,
    pub admin: KeyPair,
    pub students: Vec<KeyPair>,
    pub clock: ManualClock,
}

impl DemoEnv {
    /// `n_students` records seeded by the admin, none anchored yet.
    pub fn new(n_students: usize, block_gas_limit: u64, seed: u64) -> DemoEnv {
        let sealer = KeyPair::dev("demo-sealer", 0);
        let admin = KeyPair::dev("demo-admin", 0);
        let mut config = ChainConfig::poa(DEMO_CHAIN_ID, vec![sealer.address()]);
        config.block_gas_limit = block_gas_limit;
        config.poa_period_s = 1;
        let genesis = Genesis {
            config,
            timestamp: 0,
            alloc: [(admin.address(), 1 << 50)].into_iter().collect(),
        };
        let sim = Sim::new(
            &genesis,
            vec![Role::Sealer(sealer)],
            SimConfig {
                seed,
                ..SimConfig::default()
            },
        )
        .expect("demo genesis is valid");
        let backend = SimBackend::new(sim, 0);
        let mut docs = DocStore::in_memory(AccessControl::new([], [admin.address()]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let students: Vec<KeyPair> = (0..n_students).map(|_| KeyPair::random(&mut rng)).collect();
        for s in &students {
            docs.put_record(fixtures::random_record(&mut rng, s.address()), &admin)
                .expect("admin may write");
        }
        let clock = ManualClock::new(1_700_000_000);
        let svc = Arc::new(Service::new(
            Arc::new(backend.clone()),
            docs,
            vec![admin.clone()],
            Arc::new(clock.clone()),
        ));
        DemoEnv {
            svc,
            backend,
            admin,
            students,
            clock,
        }
    }

    /// Runs the whole challenge-response login for `key`.
    pub fn login(&self, key: &KeyPair) -> Result<Session, ServiceError> {
        let c = self.svc.auth_challenge(key.address());
        let sig = key.sign(&keccak256(c.message().as_bytes()));
        self.svc.auth_verify(key.address(), &c.nonce, &sig)
    }

    pub fn advance_ms(&self, ms: u64) {
        self.backend.sim.lock().run_for(ms);
    }

    /// Advances virtual time until every submitted anchoring transaction
    /// is confirmed and written back. Returns false if that takes over 60 s.
    pub fn settle(&self) -> bool {
        for _ in 0..60 {
            self.svc.poll_confirmations();
            if self.svc.watched() == 0 {
                return true;
            }
            self.advance_ms(1000);
        }
        self.svc.poll_confirmations();
        self.svc.watched() == 0
    }
}
