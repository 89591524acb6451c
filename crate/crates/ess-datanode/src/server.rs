//! Wire-protocol server around [`BlockStore`]: registration with the
//! namenode, heartbeats, throttled data plane, drain fencing, and hard
//! termination that closes every socket.

use std::net::{IpAddr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use ess_proto::clock::Clock;
use ess_proto::net::FramedStream;
use ess_proto::{DatanodeId, Error, Fault, Message, PROTOCOL_VERSION};
use parking_lot::Mutex;

use crate::store::BlockStore;
use crate::throttle::Throttle;

#[derive(Debug, Clone)]
pub struct DatanodeConfig {
    /// Listen address; port 0 binds an ephemeral port.
    pub listen: String,
    /// Namenode address for registration and heartbeats.
    pub namenode: String,
    pub capacity_blocks: u32,
    pub block_size: u32,
    /// Egress throttle in bytes/second applied to read payloads.
    pub egress_limit: Option<u64>,
    /// Ingress throttle in bytes/second applied to write payloads.
    pub ingress_limit: Option<u64>,
    pub heartbeat_interval: Duration,
    /// Peers besides loopback allowed to send EnterDraining/Terminate.
    pub control_peers: Vec<IpAddr>,
}

impl DatanodeConfig {
    pub fn new(namenode: impl Into<String>, capacity_blocks: u32) -> DatanodeConfig {
        DatanodeConfig {
            listen: "127.0.0.1:0".into(),
            namenode: namenode.into(),
            capacity_blocks,
            block_size: ess_proto::DEFAULT_BLOCK_SIZE,
            egress_limit: None,
            ingress_limit: None,
            heartbeat_interval: Duration::from_secs(1),
            control_peers: Vec::new(),
        }
    }
}

/// Lifecycle control messages are only honored from the loopback interface
/// or an explicitly configured peer list.
pub fn control_allowed(peer: IpAddr, extra: &[IpAddr]) -> bool {
    peer.is_loopback() || extra.contains(&peer)
}

struct Shared {
    store: BlockStore,
    egress: Throttle,
    ingress: Throttle,
    clock: Arc<dyn Clock>,
    stopping: AtomicBool,
    conns: Mutex<Vec<(u64, TcpStream)>>,
    next_conn: AtomicU64,
    control_peers: Vec<IpAddr>,
    addr: SocketAddr,
}

impl Shared {
    /// Drops all blocks, stops accepting, and severs every connection.
    /// Safe to invoke repeatedly from any thread.
    fn terminate(&self) {
        self.store.terminate();
        if self.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for (_, conn) in self.conns.lock().iter() {
            let _ = conn.shutdown(std::net::Shutdown::Both);
        }
    }
}

/// A running datanode. Dropping the handle terminates it.
pub struct DatanodeHandle {
    node_id: DatanodeId,
    shared: Arc<Shared>,
    accept_join: Option<JoinHandle<()>>,
    heartbeat_join: Option<JoinHandle<()>>,
}

impl DatanodeHandle {
    pub fn node_id(&self) -> DatanodeId {
        self.node_id
    }

    pub fn addr(&self) -> SocketAddr {
        self.shared.addr
    }

    pub fn store(&self) -> &BlockStore {
        &self.shared.store
    }

    pub fn terminate(&mut self) {
        self.shared.terminate();
        if let Some(j) = self.accept_join.take() {
            let _ = j.join();
        }
        if let Some(j) = self.heartbeat_join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for DatanodeHandle {
    fn drop(&mut self) {
        self.terminate();
    }
}

/// Binds the listen address, registers with the namenode, and serves blocks
/// until terminated.
pub fn spawn(cfg: DatanodeConfig, clock: Arc<dyn Clock>) -> ess_proto::Result<DatanodeHandle> {
    let listener = TcpListener::bind(cfg.listen.as_str())?;
    let addr = listener.local_addr()?;

    let node_id = register_with_namenode(&cfg, &addr)?;
    log::info!("datanode {node_id} serving {addr}, {} blocks", cfg.capacity_blocks);

    let shared = Arc::new(Shared {
        store: BlockStore::new(cfg.capacity_blocks, cfg.block_size),
        egress: Throttle::new(cfg.egress_limit, clock.clone()),
        ingress: Throttle::new(cfg.ingress_limit, clock.clone()),
        clock,
        stopping: AtomicBool::new(false),
        conns: Mutex::new(Vec::new()),
        next_conn: AtomicU64::new(0),
        control_peers: cfg.control_peers.clone(),
        addr,
    });

    let accept_shared = shared.clone();
    let accept_join = std::thread::Builder::new()
        .name("dn-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))?;

    let hb_shared = shared.clone();
    let namenode = cfg.namenode.clone();
    let interval = cfg.heartbeat_interval;
    let heartbeat_join = std::thread::Builder::new()
        .name("dn-heartbeat".into())
        .spawn(move || heartbeat_loop(hb_shared, namenode, node_id, interval))?;

    Ok(DatanodeHandle {
        node_id,
        shared,
        accept_join: Some(accept_join),
        heartbeat_join: Some(heartbeat_join),
    })
}

fn register_with_namenode(cfg: &DatanodeConfig, addr: &SocketAddr) -> ess_proto::Result<DatanodeId> {
    let mut last_err: Option<Error> = None;
    for _ in 0..10 {
        match FramedStream::connect(cfg.namenode.as_str()) {
            Ok(mut conn) => {
                let resp = conn.request(&Message::Register {
                    address: addr.to_string(),
                    capacity_blocks: cfg.capacity_blocks,
                    protocol_version: PROTOCOL_VERSION,
                })?;
                match resp {
                    Message::RegisterOk { node } => return Ok(node),
                    other => {
                        return Err(Fault::protocol(format!(
                            "unexpected register response {:#04x}",
                            other.type_byte()
                        ))
                        .into())
                    }
                }
            }
            Err(e) => {
                last_err = Some(e);
                std::thread::sleep(Duration::from_millis(200));
            }
        }
    }
    Err(last_err.expect("loop ran"))
}

fn heartbeat_loop(shared: Arc<Shared>, namenode: String, node: DatanodeId, interval: Duration) {
    let mut conn: Option<FramedStream> = None;
    while !shared.stopping.load(Ordering::SeqCst) {
        // Sleep in slices so termination is picked up promptly.
        let mut slept = Duration::ZERO;
        while slept < interval && !shared.stopping.load(Ordering::SeqCst) {
            let slice = (interval - slept).min(Duration::from_millis(100));
            std::thread::sleep(slice);
            slept += slice;
        }
        if shared.stopping.load(Ordering::SeqCst) {
            return;
        }
        if conn.is_none() {
            conn = FramedStream::connect(namenode.as_str()).ok();
        }
        let Some(stream) = conn.as_mut() else { continue };
        match stream.request(&Message::Heartbeat { node }) {
            Ok(_) => {}
            Err(Error::Fault(fault)) if fault.code == ess_proto::ErrorCode::Conflict => {
                // The namenode already considers us terminated.
                log::warn!("{node} heartbeat rejected: {fault}");
                return;
            }
            Err(_) => conn = None,
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        let (stream, peer) = match listener.accept() {
            Ok(pair) => pair,
            Err(e) => {
                if shared.stopping.load(Ordering::SeqCst) {
                    return;
                }
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        if shared.stopping.load(Ordering::SeqCst) {
            // Listener is being torn down; refuse service from here on.
            return;
        }
        let token = shared.next_conn.fetch_add(1, Ordering::Relaxed);
        if let Ok(clone) = stream.try_clone() {
            shared.conns.lock().push((token, clone));
        }
        let conn_shared = shared.clone();
        let _ = std::thread::Builder::new()
            .name("dn-conn".into())
            .spawn(move || {
                if let Ok(framed) = FramedStream::from_stream(stream) {
                    serve_connection(framed, peer, &conn_shared);
                }
                conn_shared.conns.lock().retain(|(t, _)| *t != token);
            });
    }
}

fn serve_connection(mut conn: FramedStream, peer: SocketAddr, shared: &Shared) {
    loop {
        let request = match conn.recv() {
            Ok(Some(msg)) => msg,
            Ok(None) => return,
            Err(Error::Fault(fault)) => {
                let _ = conn.send(&Message::ErrorResponse(fault));
                return;
            }
            Err(Error::Io(_)) => return,
        };
        let keep_going = || !shared.stopping.load(Ordering::SeqCst);
        let response = match request {
            Message::WriteBlock {
                block,
                offset,
                crc,
                data,
            } => {
                if !shared.ingress.acquire(data.len() as u64, &keep_going) {
                    return;
                }
                shared
                    .store
                    .write_block(block, offset, &data, crc)
                    .map(|()| Message::WriteBlockOk)
            }
            Message::ReadBlock { block, offset, len } => {
                match shared.store.read_block(block, offset, len) {
                    Ok((data, crc)) => {
                        if !shared.egress.acquire(data.len() as u64, &keep_going) {
                            return;
                        }
                        Ok(Message::ReadBlockOk { crc, data })
                    }
                    Err(fault) => Err(fault),
                }
            }
            Message::DeleteBlock { block } => {
                shared.store.delete_block(block);
                Ok(Message::DeleteBlockOk)
            }
            Message::EnterDraining { deadline_in_ms } => {
                if !control_allowed(peer.ip(), &shared.control_peers) {
                    Err(Fault::protocol(format!(
                        "control message refused from {peer}"
                    )))
                } else {
                    let deadline = shared.clock.now() + Duration::from_millis(deadline_in_ms);
                    shared.store.enter_draining(deadline).map(|()| {
                        log::info!("draining; {deadline_in_ms}ms until termination");
                        Message::EnterDrainingOk
                    })
                }
            }
            Message::Terminate => {
                if !control_allowed(peer.ip(), &shared.control_peers) {
                    Err(Fault::protocol(format!(
                        "control message refused from {peer}"
                    )))
                } else {
                    // No response: the service stops and all sockets close.
                    log::info!("terminated");
                    shared.terminate();
                    return;
                }
            }
            other => Err(Fault::protocol(format!(
                "message {:#04x} is not a datanode request",
                other.type_byte()
            ))),
        };
        let frame = match response {
            Ok(msg) => msg,
            Err(fault) => Message::ErrorResponse(fault),
        };
        if conn.send(&frame).is_err() {
            return;
        }
    }
}
