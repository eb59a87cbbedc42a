//! A TCP node with the service and its RPC server in one process.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::Genesis;
use crate::crypto::KeyPair;
use crate::docstore::{fixtures, AccessControl, DocStore, DocStoreError};
use crate::node::runtime::{NodeConfig, NodeHandle, RunningNode, RuntimeError};

use super::http::RpcServer;
use super::{Service, SystemClock};

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    DocStore(#[from] DocStoreError),
    #[error("rpc listener: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub rpc_listen: SocketAddr,
    pub admin_keys: Vec<KeyPair>,
    /// Append-only op log; in memory when absent.
    pub docstore: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub workers: usize,
    /// Fixture records to create for [`demo_student`] keys `0..n` when missing.
    pub seed_records: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            rpc_listen: ([127, 0, 0, 1], 0).into(),
            admin_keys: Vec::new(),
            docstore: None,
            cors_origin: None,
            workers: 2,
            seed_records: 0,
        }
    }
}

pub fn demo_student(i: u64) -> KeyPair {
    KeyPair::dev("student", i)
}

pub struct NodeService {
    pub node: RunningNode,
    pub rpc: RpcServer,
    pub svc: Arc<Service>,
}

impl NodeService {
    pub fn start(cfg: &NodeConfig, genesis: Genesis, opts: &ServiceOptions) -> Result<NodeService, LaunchError> {
        let admins: Vec<_> = opts.admin_keys.iter().map(|k| k.address()).collect();
        let acl = AccessControl::new(admins.clone(), admins);
        let mut docs = match &opts.docstore {
            Some(p) => DocStore::open(p, acl)?,
            None => DocStore::in_memory(acl),
        };
        if let Some(writer) = opts.admin_keys.first() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for i in 0..opts.seed_records as u64 {
                let student = demo_student(i).address();
                let record = fixtures::random_record(&mut rng, student);
                if docs.get_record(&student).is_err() {
                    docs.put_record(record, writer)?;
                }
            }
        }
        let node = RunningNode::from_config(cfg, genesis)?;
        let svc = Arc::new(Service::new(
            Arc::new(node.handle()),
            docs,
            opts.admin_keys.clone(),
            Arc::new(SystemClock),
        ));
        let rpc = RpcServer::start(svc.clone(), opts.rpc_listen, opts.cors_origin.as_deref(), opts.workers)?;
        Ok(NodeService { node, rpc, svc })
    }

    pub fn url(&self) -> String {
        self.rpc.url()
    }

    pub fn handle(&self) -> NodeHandle {
        self.node.handle()
    }

    pub fn shutdown(self) {
        self.rpc.shutdown();
        self.node.shutdown();
    }
}
