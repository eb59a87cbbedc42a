//! Runs a [`Node`] on real threads: one event loop owning timers, TCP
//! peer connections with length-prefixed framing, an optional mining
//! thread and optional on-disk persistence.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Condvar, Mutex, RwLock, RwLockReadGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ConsensusKind, Genesis, SealedTx};
use crate::consensus::{pow_seal, pow_equilibrium_difficulty};
use crate::crypto::{Address, CryptoError, Digest32, KeyPair};

use super::store::{ChainStore, RestoreStats, StoreError};
use super::{Input, MineJob, NetMessage, Node, NodeError, Output, PeerId, Role, SubmitError, Timer, MAX_MESSAGE_BYTES};

const DIAL_RETRY_MS: u64 = 500;

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("key: {0}")]
    Key(#[from] CryptoError),
    #[error("node has shut down")]
    Stopped,
}

/// Role as written in a node config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoleConfig {
    Observer,
    Sealer { secret_key: String },
    Miner { coinbase: Address },
}

impl RoleConfig {
    pub fn to_role(&self) -> Result<Role, RuntimeError> {
        Ok(match self {
            RoleConfig::Observer => Role::Observer,
            RoleConfig::Sealer { secret_key } => Role::Sealer(KeyPair::from_secret_hex(secret_key)?),
            RoleConfig::Miner { coinbase } => Role::Miner(*coinbase),
        })
    }
}

/// Node config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    /// Path of the genesis file, relative to the config file.
    pub genesis: PathBuf,
    pub role: RoleConfig,
    pub listen: SocketAddr,
    #[serde(default)]
    pub peers: Vec<SocketAddr>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl NodeConfig {
    /// Reads the config and the genesis it points to.
    pub fn load(path: impl AsRef<Path>) -> Result<(NodeConfig, Genesis), RuntimeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: NodeConfig =
            serde_json::from_str(&text).map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.genesis.is_relative() {
            cfg.genesis = base.join(&cfg.genesis);
        }
        if let Some(d) = &cfg.data_dir {
            if d.is_relative() {
                cfg.data_dir = Some(base.join(d));
            }
        }
        let genesis = load_genesis(&cfg.genesis)?;
        Ok((cfg, genesis))
    }
}

pub fn load_genesis(path: impl AsRef<Path>) -> Result<Genesis, RuntimeError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let g: Genesis =
        serde_json::from_str(&text).map_err(|e| RuntimeError::Config(format!("{}: {e}", path.display())))?;
    g.config.validate().map_err(RuntimeError::Config)?;
    Ok(g)
}

/// Hashes per second of this machine's PoW inner loop, measured for `ms`.
pub fn measure_hashrate(ms: u64) -> f64 {
    let seal = crate::crypto::keccak256(b"calibration");
    let start = std::time::Instant::now();
    let mut tried = 0u64;
    while start.elapsed() < Duration::from_millis(ms) {
        // difficulty u64::MAX almost never succeeds, so every nonce is tried
        let _ = crate::consensus::pow_search(&seal, u64::MAX, tried, 4096);
        tried += 4096;
    }
    tried as f64 / start.elapsed().as_secs_f64()
}

/// PoW difficulty for `miners` miners of this machine's hashrate.
pub fn calibrated_difficulty(miners: usize, target_block_s: u64) -> u64 {
    pow_equilibrium_difficulty(measure_hashrate(500) * miners as f64, target_block_s)
}

enum Cmd {
    Input(Input),
    Submit(SealedTx, SyncSender<Result<Digest32, SubmitError>>),
    Timer(u64, Timer),
    Shutdown,
}

struct Peer {
    addr: SocketAddr,
    out: Sender<Arc<Vec<u8>>>,
    stream: TcpStream,
}

#[derive(Default)]
struct MineSlot {
    job: Option<MineJob>,
    stop: bool,
}

struct Shared {
    node: RwLock<Node>,
    cmds: Mutex<Sender<Cmd>>,
    peers: Mutex<HashMap<PeerId, Peer>>,
    next_peer: AtomicU64,
    stopped: AtomicBool,
    mine: Mutex<MineSlot>,
    mine_cv: Condvar,
    mine_cancel: AtomicBool,
    hashes: AtomicU64,
    send_failures: AtomicU64,
    local_addr: SocketAddr,
}

impl Shared {
    fn send_cmd(&self, c: Cmd) -> bool {
        self.cmds.lock().send(c).is_ok()
    }

    fn execute(&self, outs: Vec<Output>) {
        for o in outs {
            match o {
                Output::Send { to, msg } => {
                    let Ok(bytes) = msg.encode() else {
                        self.send_failures.fetch_add(1, Ordering::Relaxed);
                        continue;
                    };
                    let peers = self.peers.lock();
                    match peers.get(&to) {
                        Some(p) if p.out.send(Arc::new(bytes)).is_ok() => {}
                        _ => {
                            self.send_failures.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                Output::SetTimer { at_ms, timer } => {
                    self.send_cmd(Cmd::Timer(at_ms, timer));
                }
                Output::Mine(job) => {
                    let mut slot = self.mine.lock();
                    slot.job = Some(job);
                    self.mine_cancel.store(true, Ordering::SeqCst);
                    self.mine_cv.notify_one();
                }
                Output::Disconnect(p) => {
                    if let Some(peer) = self.peers.lock().remove(&p) {
                        let _ = peer.stream.shutdown(Shutdown::Both);
                    }
                }
            }
        }
    }
}

/// Cheap cloneable handle to a running node.
#[derive(Clone)]
pub struct NodeHandle {
    shared: Arc<Shared>,
}

pub struct RunningNode {
    handle: NodeHandle,
    threads: Vec<JoinHandle<()>>,
    pub restored: RestoreStats,
}

impl RunningNode {
    /// Restores from `data_dir` if given, binds `listen`, dials `peers` and starts producing.
    pub fn start(
        genesis: Genesis,
        role: Role,
        listen: SocketAddr,
        peers: &[SocketAddr],
        data_dir: Option<&Path>,
        seed: u64,
    ) -> Result<RunningNode, RuntimeError> {
        let mut node = Node::new(genesis, role, seed)?;
        let mut store = match data_dir {
            Some(d) => Some(ChainStore::open(d)?),
            None => None,
        };
        let restored = match &store {
            Some(s) => s.restore(&mut node, unix_ms())?,
            None => RestoreStats::default(),
        };
        if let Some(s) = store.as_mut() {
            s.maybe_snapshot(&node)?;
        }
        let is_miner = matches!(node.role(), Role::Miner(_)) && node.config().consensus == ConsensusKind::PoW;
        let listener = TcpListener::bind(listen)?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            node: RwLock::new(node),
            cmds: Mutex::new(tx),
            peers: Mutex::new(HashMap::new()),
            next_peer: AtomicU64::new(1),
            stopped: AtomicBool::new(false),
            mine: Mutex::new(MineSlot::default()),
            mine_cv: Condvar::new(),
            mine_cancel: AtomicBool::new(false),
            hashes: AtomicU64::new(0),
            send_failures: AtomicU64::new(0),
            local_addr,
        });
        let mut threads = Vec::new();
        {
            let s = shared.clone();
            threads.push(spawn("event-loop", move || event_loop(s, rx, store)));
        }
        {
            let s = shared.clone();
            threads.push(spawn("accept", move || accept_loop(s, listener)));
        }
        for addr in peers.iter().copied() {
            let s = shared.clone();
            threads.push(spawn("dial", move || dial_loop(s, addr)));
        }
        if is_miner {
            let s = shared.clone();
            threads.push(spawn("miner", move || mine_loop(s, seed)));
        }
        let outs = shared.node.write().start(unix_ms());
        shared.execute(outs);
        Ok(RunningNode {
            handle: NodeHandle { shared },
            threads,
            restored,
        })
    }

    pub fn from_config(cfg: &NodeConfig, genesis: Genesis) -> Result<RunningNode, RuntimeError> {
        Self::start(
            genesis,
            cfg.role.to_role()?,
            cfg.listen,
            &cfg.peers,
            cfg.data_dir.as_deref(),
            cfg.seed,
        )
    }

    pub fn handle(&self) -> NodeHandle {
        self.handle.clone()
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        let s = &self.handle.shared;
        if s.stopped.swap(true, Ordering::SeqCst) {
            return;
        }
        s.send_cmd(Cmd::Shutdown);
        {
            let mut slot = s.mine.lock();
            slot.stop = true;
            s.mine_cancel.store(true, Ordering::SeqCst);
            s.mine_cv.notify_all();
        }
        for (_, p) in s.peers.lock().drain() {
            let _ = p.stream.shutdown(Shutdown::Both);
        }
        // unblock accept()
        let _ = TcpStream::connect_timeout(&s.local_addr, Duration::from_millis(200));
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

impl NodeHandle {
    pub fn submit_tx(&self, tx: SealedTx) -> Result<Result<Digest32, SubmitError>, RuntimeError> {
        let (reply, rx) = mpsc::sync_channel(1);
        if self.shared.stopped.load(Ordering::SeqCst) || !self.shared.send_cmd(Cmd::Submit(tx, reply)) {
            return Err(RuntimeError::Stopped);
        }
        rx.recv().map_err(|_| RuntimeError::Stopped)
    }

    /// Read access to the node state; hold it briefly.
    pub fn read(&self) -> RwLockReadGuard<'_, Node> {
        self.shared.node.read()
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.shared.local_addr
    }

    pub fn peer_count(&self) -> usize {
        self.shared.peers.lock().len()
    }

    pub fn peer_addrs(&self) -> Vec<SocketAddr> {
        self.shared.peers.lock().values().map(|p| p.addr).collect()
    }

    pub fn pow_hashes(&self) -> u64 {
        self.shared.hashes.load(Ordering::Relaxed)
    }

    pub fn send_failures(&self) -> u64 {
        self.shared.send_failures.load(Ordering::Relaxed)
    }

    pub fn is_running(&self) -> bool {
        !self.shared.stopped.load(Ordering::SeqCst)
    }

    /// Polls until `pred` holds or `timeout` elapses.
    pub fn wait_for(&self, timeout: Duration, mut pred: impl FnMut(&Node) -> bool) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            if pred(&self.read()) {
                return true;
            }
            if std::time::Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(10));
        }
    }
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    thread::Builder::new()
        .name(name.to_string())
        .spawn(f)
        .expect("thread spawn")
}

fn event_loop(s: Arc<Shared>, rx: Receiver<Cmd>, mut store: Option<ChainStore>) {
    let mut timers: BinaryHeap<Reverse<(u64, u64)>> = BinaryHeap::new();
    let mut timer_kinds: HashMap<u64, Timer> = HashMap::new();
    let mut seq = 0u64;
    loop {
        let now = unix_ms();
        let wait = timers
            .peek()
            .map_or(Duration::from_millis(1000), |Reverse((at, _))| Duration::from_millis(at.saturating_sub(now)));
        let cmd = match rx.recv_timeout(wait) {
            Ok(c) => Some(c),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => return,
        };
        let mut outs = Vec::new();
        {
            let mut node = s.node.write();
            match cmd {
                Some(Cmd::Shutdown) => return,
                Some(Cmd::Timer(at, t)) => {
                    seq += 1;
                    timers.push(Reverse((at, seq)));
                    timer_kinds.insert(seq, t);
                }
                Some(Cmd::Input(i)) => outs.extend(node.handle(unix_ms(), i)),
                Some(Cmd::Submit(tx, reply)) => {
                    let (r, o) = node.submit_tx(unix_ms(), tx);
                    let _ = reply.send(r);
                    outs.extend(o);
                }
                None => {}
            }
            let now = unix_ms();
            while timers.peek().is_some_and(|Reverse((at, _))| *at <= now) {
                let Reverse((_, id)) = timers.pop().expect("peeked");
                if let Some(t) = timer_kinds.remove(&id) {
                    outs.extend(node.handle(now, Input::Timer(t)));
                }
            }
            if let Some(st) = store.as_mut() {
                let imported = node.drain_imported();
                if !imported.is_empty() {
                    if let Err(e) = st.append(&imported).and_then(|_| st.maybe_snapshot(&node).map(|_| ())) {
                        tracing::error!(error = %e, "persisting blocks failed");
                    }
                }
            } else {
                node.drain_imported();
            }
        }
        s.execute(outs);
    }
}

fn accept_loop(s: Arc<Shared>, listener: TcpListener) {
    for conn in listener.incoming() {
        if s.stopped.load(Ordering::SeqCst) {
            return;
        }
        match conn {
            Ok(stream) => {
                let addr = stream.peer_addr().unwrap_or(s.local_addr);
                let _ = add_peer(&s, stream, addr);
            }
            Err(e) => tracing::debug!(error = %e, "accept failed"),
        }
    }
}

/// Keeps one outbound connection to `addr` alive until shutdown.
fn dial_loop(s: Arc<Shared>, addr: SocketAddr) {
    while !s.stopped.load(Ordering::SeqCst) {
        if let Ok(stream) = TcpStream::connect_timeout(&addr, Duration::from_millis(1000)) {
            if let Ok(reader) = add_peer(&s, stream, addr) {
                let _ = reader.join();
            }
        }
        thread::sleep(Duration::from_millis(DIAL_RETRY_MS));
    }
}

fn add_peer(s: &Arc<Shared>, stream: TcpStream, addr: SocketAddr) -> io::Result<JoinHandle<()>> {
    stream.set_nodelay(true)?;
    let id = s.next_peer.fetch_add(1, Ordering::Relaxed);
    let (out_tx, out_rx) = mpsc::channel::<Arc<Vec<u8>>>();
    let write_half = stream.try_clone()?;
    let read_half = stream.try_clone()?;
    s.peers.lock().insert(
        id,
        Peer {
            addr,
            out: out_tx,
            stream,
        },
    );
    spawn("peer-write", move || {
        let mut w = BufWriter::new(write_half);
        while let Ok(frame) = out_rx.recv() {
            if write_frame(&mut w, &frame).is_err() {
                break;
            }
            // batch whatever else is queued before flushing
            while let Ok(more) = out_rx.try_recv() {
                if write_frame(&mut w, &more).is_err() {
                    return;
                }
            }
            if w.flush().is_err() {
                break;
            }
        }
    });
    s.send_cmd(Cmd::Input(Input::PeerUp(id)));
    let s2 = s.clone();
    Ok(spawn("peer-read", move || {
        let mut r = BufReader::new(read_half);
        loop {
            match read_frame(&mut r) {
                Ok(bytes) => match NetMessage::decode(&bytes) {
                    Ok(msg) => {
                        if !s2.send_cmd(Cmd::Input(Input::Message { from: id, msg })) {
                            break;
                        }
                    }
                    Err(e) => {
                        tracing::debug!(peer = id, error = %e, "bad frame");
                        break;
                    }
                },
                Err(_) => break,
            }
        }
        if let Some(p) = s2.peers.lock().remove(&id) {
            let _ = p.stream.shutdown(Shutdown::Both);
        }
        s2.send_cmd(Cmd::Input(Input::PeerDown(id)));
    }))
}

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_MESSAGE_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)
}

pub fn read_frame(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(body)
}

fn mine_loop(s: Arc<Shared>, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ unix_ms());
    loop {
        let job = {
            let mut slot = s.mine.lock();
            loop {
                if slot.stop {
                    return;
                }
                if let Some(j) = slot.job.take() {
                    s.mine_cancel.store(false, Ordering::SeqCst);
                    break j;
                }
                s.mine_cv.wait(&mut slot);
            }
        };
        let start = rng.gen::<u64>();
        match pow_seal(&job.header, job.header.difficulty, start, Some(&s.mine_cancel)) {
            Ok(Some((_, solution))) => {
                s.hashes.fetch_add(solution.attempts, Ordering::Relaxed);
                s.send_cmd(Cmd::Input(Input::PowSolved { job: job.id, solution }));
            }
            Ok(None) => {}
            Err(e) => tracing::error!(error = %e, "sealing failed"),
        }
    }
}

/// Several nodes in one process on loopback ports, fully meshed.
pub struct LocalNet {
    pub nodes: Vec<RunningNode>,
}

impl LocalNet {
    pub fn start(genesis: &Genesis, roles: Vec<Role>, base_dir: Option<&Path>) -> Result<LocalNet, RuntimeError> {
        let mut nodes: Vec<RunningNode> = Vec::with_capacity(roles.len());
        for (i, role) in roles.into_iter().enumerate() {
            let dialed: Vec<SocketAddr> = nodes.iter().map(|n| n.handle.local_addr()).collect();
            let dir = base_dir.map(|b| b.join(format!("node{i}")));
            nodes.push(RunningNode::start(
                genesis.clone(),
                role,
                "127.0.0.1:0".parse().expect("addr"),
                &dialed,
                dir.as_deref(),
                i as u64 + 1,
            )?);
        }
        Ok(LocalNet { nodes })
    }

    pub fn handle(&self, i: usize) -> NodeHandle {
        self.nodes[i].handle()
    }

    /// Waits until every node reports the given number of peers.
    pub fn wait_connected(&self, timeout: Duration) -> bool {
        let n = self.nodes.len() - 1;
        let deadline = std::time::Instant::now() + timeout;
        while std::time::Instant::now() < deadline {
            if self.nodes.iter().all(|x| x.handle.peer_count() >= n) {
                return true;
            }
            thread::sleep(Duration::from_millis(10));
        }
        false
    }

    pub fn shutdown(self) {
        for n in self.nodes {
            n.shutdown();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainConfig, TxRequest};

    fn poa_genesis(period: u64, sealers: &[KeyPair], user: &KeyPair) -> Genesis {
        let mut config = ChainConfig::poa(77, sealers.iter().map(|k| k.address()).collect());
        config.poa_period_s = period;
        Genesis {
            config,
            timestamp: unix_ms() / 1000,
            alloc: [(user.address(), 1 << 40)].into_iter().collect(),
        }
    }

    #[test]
    fn frame_roundtrip_and_limit() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        assert_eq!(read_frame(&mut &buf[..]).unwrap(), b"hello");
        let mut huge = ((MAX_MESSAGE_BYTES + 1) as u32).to_be_bytes().to_vec();
        huge.extend([0u8; 8]);
        assert!(read_frame(&mut &huge[..]).is_err());
    }

    #[test]
    fn tcp_poa_net_includes_tx_and_converges() {
        let sealers: Vec<KeyPair> = (0..2).map(|i| KeyPair::dev("rt-sealer", i)).collect();
        let user = KeyPair::dev("rt-user", 0);
        let g = poa_genesis(1, &sealers, &user);
        let mut roles = vec![Role::Observer];
        roles.extend(sealers.iter().cloned().map(Role::Sealer));
        let net = LocalNet::start(&g, roles, None).unwrap();
        assert!(net.wait_connected(Duration::from_secs(5)));
        let tx = TxRequest::transfer(user.address(), 0, KeyPair::dev("rt-user", 1).address(), 5).sign(&user, 77);
        let h = net.handle(0).submit_tx(tx.clone()).unwrap().unwrap();
        assert!(matches!(net.handle(0).submit_tx(tx).unwrap(), Err(SubmitError::Duplicate)));
        assert!(net.handle(0).wait_for(Duration::from_secs(10), |n| n.receipt(&h).is_some()));
        assert!(net.handle(0).wait_for(Duration::from_secs(10), |n| n.head_number() >= 3));
        let target = net.handle(0).read().block_by_number(3).unwrap().hash();
        for i in 0..3 {
            assert!(net
                .handle(i)
                .wait_for(Duration::from_secs(10), |n| n.block_by_number(3).map(|b| b.hash()) == Some(target)));
        }
        net.shutdown();
    }

    #[test]
    fn restart_resumes_from_disk() {
        let sealer = KeyPair::dev("rt-sealer", 9);
        let user = KeyPair::dev("rt-user", 0);
        let g = poa_genesis(1, std::slice::from_ref(&sealer), &user);
        let dir = tempfile::tempdir().unwrap();
        let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let n = RunningNode::start(g.clone(), Role::Sealer(sealer.clone()), addr, &[], Some(dir.path()), 1).unwrap();
        let tx = TxRequest::store(user.address(), 0, crate::crypto::keccak256(b"r")).sign(&user, 77);
        let h = n.handle().submit_tx(tx).unwrap().unwrap();
        assert!(n.handle().wait_for(Duration::from_secs(10), |x| x.receipt(&h).is_some()));
        let head = n.handle().read().head_hash();
        let number = n.handle().read().head_number();
        n.shutdown();

        let again = RunningNode::start(g, Role::Observer, addr, &[], Some(dir.path()), 2).unwrap();
        let node = again.handle();
        let node = node.read();
        assert!(node.head_number() >= number);
        assert_eq!(node.block_by_number(number).unwrap().hash(), head);
        assert!(node.receipt(&h).is_some());
        assert!(node.head_state().registry.check(&crate::crypto::keccak256(b"r")));
        drop(node);
        again.shutdown();
    }

    #[test]
    fn pow_miner_produces_blocks() {
        let g = Genesis {
            config: ChainConfig::pow(78, 2_000, 1),
            timestamp: unix_ms() / 1000,
            alloc: Default::default(),
        };
        let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let n = RunningNode::start(g, Role::Miner(KeyPair::dev("rt-miner", 0).address()), addr, &[], None, 3).unwrap();
        assert!(n.handle().wait_for(Duration::from_secs(20), |x| x.head_number() >= 2));
        assert!(n.handle().pow_hashes() > 0);
        n.shutdown();
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let user = KeyPair::dev("rt-user", 0);
        let sealer = KeyPair::dev("rt-sealer", 0);
        let g = poa_genesis(4, std::slice::from_ref(&sealer), &user);
        std::fs::write(dir.path().join("genesis.json"), serde_json::to_vec_pretty(&g).unwrap()).unwrap();
        let cfg = serde_json::json!({
            "genesis": "genesis.json",
            "role": {"kind": "sealer", "secret_key": hex::encode(sealer.secret_bytes())},
            "listen": "127.0.0.1:0",
            "peers": ["127.0.0.1:30999"],
            "data_dir": "data"
        });
        let path = dir.path().join("node.json");
        std::fs::write(&path, cfg.to_string()).unwrap();
        let (c, g2) = NodeConfig::load(&path).unwrap();
        assert_eq!(g2, g);
        assert_eq!(c.data_dir.unwrap(), dir.path().join("data"));
        assert!(matches!(c.role.to_role().unwrap(), Role::Sealer(k) if k.address() == sealer.address()));
        std::fs::write(&path, "{\"role\": 3}").unwrap();
        assert!(matches!(NodeConfig::load(&path), Err(RuntimeError::Config(_))));
    }
}
