//! Wire-protocol server around [`MetaStore`]. One thread per connection;
//! metadata operations run under a single mutex and never perform datanode
//! I/O while holding it (delete fan-out happens on a detached thread).

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use ess_proto::clock::Clock;
use ess_proto::message::AllocateRequest;
use ess_proto::net::FramedStream;
use ess_proto::{BlockId, DatanodeRef, Error, Fault, Message, PROTOCOL_VERSION};
use parking_lot::Mutex;

use crate::state::MetaStore;
use crate::NamenodeConfig;

struct Shared {
    state: Mutex<MetaStore>,
    clock: Arc<dyn Clock>,
    shutdown: AtomicBool,
    conns: Mutex<Vec<(u64, TcpStream)>>,
    next_conn: AtomicU64,
}

/// A running namenode. Dropping the handle shuts the service down.
pub struct NamenodeHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept_join: Option<JoinHandle<()>>,
    sweeper_join: Option<JoinHandle<()>>,
}

impl NamenodeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Direct access to the metadata store, for in-process harnesses and
    /// tests.
    pub fn with_state<T>(&self, f: impl FnOnce(&mut MetaStore) -> T) -> T {
        f(&mut self.shared.state.lock())
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.shared.clock
    }

    pub fn shutdown(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        for (_, conn) in self.shared.conns.lock().iter() {
            let _ = conn.shutdown(std::net::Shutdown::Both);
        }
        if let Some(j) = self.accept_join.take() {
            let _ = j.join();
        }
        if let Some(j) = self.sweeper_join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for NamenodeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `listen` and serves the metadata protocol until shutdown.
pub fn spawn(
    cfg: NamenodeConfig,
    listen: impl ToSocketAddrs,
    clock: Arc<dyn Clock>,
) -> std::io::Result<NamenodeHandle> {
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        state: Mutex::new(MetaStore::new(cfg.clone())),
        clock,
        shutdown: AtomicBool::new(false),
        conns: Mutex::new(Vec::new()),
        next_conn: AtomicU64::new(0),
    });

    let accept_shared = shared.clone();
    let accept_join = std::thread::Builder::new()
        .name("nn-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))?;

    let sweep_shared = shared.clone();
    let tick = (cfg.heartbeat_timeout / 10).clamp(Duration::from_millis(50), Duration::from_secs(1));
    let sweeper_join = std::thread::Builder::new()
        .name("nn-sweeper".into())
        .spawn(move || {
            while !sweep_shared.shutdown.load(Ordering::SeqCst) {
                sweep_shared.clock.sleep(tick);
                let now = sweep_shared.clock.now();
                let expired = sweep_shared.state.lock().check_heartbeats(now);
                for (node, lost) in expired {
                    log::warn!("{node} missed heartbeats; terminated with {lost} blocks lost");
                }
            }
        })?;

    log::info!("namenode listening on {addr}");
    Ok(NamenodeHandle {
        addr,
        shared,
        accept_join: Some(accept_join),
        sweeper_join: Some(sweeper_join),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        let stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(e) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        if shared.shutdown.load(Ordering::SeqCst) {
            return;
        }
        let token = shared.next_conn.fetch_add(1, Ordering::Relaxed);
        if let Ok(clone) = stream.try_clone() {
            shared.conns.lock().push((token, clone));
        }
        let conn_shared = shared.clone();
        let _ = std::thread::Builder::new()
            .name("nn-conn".into())
            .spawn(move || {
                if let Ok(framed) = FramedStream::from_stream(stream) {
                    serve_connection(framed, &conn_shared);
                }
                conn_shared.conns.lock().retain(|(t, _)| *t != token);
            });
    }
}

fn serve_connection(mut conn: FramedStream, shared: &Shared) {
    loop {
        let request = match conn.recv() {
            Ok(Some(msg)) => msg,
            Ok(None) => return,
            Err(Error::Fault(fault)) => {
                // Malformed frame: report and drop the connection, since
                // framing may be out of sync.
                let _ = conn.send(&Message::ErrorResponse(fault));
                return;
            }
            Err(Error::Io(_)) => return,
        };
        let response = match handle_request(request, shared) {
            Ok(resp) => resp,
            Err(fault) => Message::ErrorResponse(fault),
        };
        if conn.send(&response).is_err() {
            return;
        }
    }
}

fn handle_request(request: Message, shared: &Shared) -> Result<Message, Fault> {
    let now = shared.clock.now();
    let mut state = shared.state.lock();
    match request {
        Message::Register {
            address,
            capacity_blocks,
            protocol_version,
        } => {
            if protocol_version != PROTOCOL_VERSION {
                return Err(Fault::protocol(format!(
                    "unsupported protocol version {protocol_version}"
                )));
            }
            let node = state.register_datanode(&address, capacity_blocks, now)?;
            log::info!("registered {node} at {address} ({capacity_blocks} blocks)");
            Ok(Message::RegisterOk { node })
        }
        Message::Heartbeat { node } => {
            state.heartbeat(node, now)?;
            Ok(Message::HeartbeatOk)
        }
        Message::CreateObject { name } => {
            state.create_object(&name)?;
            Ok(Message::CreateObjectOk)
        }
        Message::GetMetadata { name } => {
            let (meta, nodes) = state.get_metadata(&name)?;
            Ok(Message::GetMetadataOk { meta, nodes })
        }
        Message::AllocateBlock(req) => {
            let (block, target) = match req {
                AllocateRequest::Append {
                    object,
                    length,
                    exclude,
                } => state.allocate_append(&object, length, &exclude)?,
                AllocateRequest::Replace {
                    object,
                    index,
                    prev_block,
                    length,
                    exclude,
                } => state.allocate_replace(&object, index, prev_block, length, &exclude)?,
                AllocateRequest::Destination { block, exclude } => {
                    state.allocate_destination(block, &exclude)?
                }
            };
            Ok(Message::AllocateBlockOk { block, target })
        }
        Message::CommitRelocation {
            block,
            new_node,
            expected_version,
        } => {
            let version = state.commit_relocation(block, new_node, expected_version)?;
            Ok(Message::CommitRelocationOk { version })
        }
        Message::ListBlocksOnNode { node } => {
            let blocks = state.list_blocks_on_node(node)?;
            let node = state.node(node).expect("listing checked").node_ref();
            Ok(Message::ListBlocksOnNodeOk { node, blocks })
        }
        Message::BeginDrain {
            node,
            deadline_in_ms,
        } => {
            let deadline = now + Duration::from_millis(deadline_in_ms);
            state.begin_drain(node, deadline)?;
            log::info!("{node} draining, {deadline_in_ms}ms until termination");
            Ok(Message::BeginDrainOk)
        }
        Message::MarkLost { node } => {
            let lost_blocks = state.mark_node_terminated(node)?;
            if lost_blocks > 0 {
                log::warn!("{node} terminated with {lost_blocks} blocks lost");
            } else {
                log::info!("{node} terminated cleanly");
            }
            Ok(Message::MarkLostOk { lost_blocks })
        }
        Message::DeleteObject { name } => {
            let forwards = state.delete_object(&name)?;
            drop(state);
            if !forwards.is_empty() {
                std::thread::spawn(move || forward_deletes(forwards));
            }
            Ok(Message::DeleteObjectOk)
        }
        other => Err(Fault::protocol(format!(
            "message {:#04x} is not a namenode request",
            other.type_byte()
        ))),
    }
}

/// Best-effort per-block deletes after an object is removed from the
/// namespace. Unreachable datanodes are skipped; a draining node serves
/// deletes, a terminated one refuses the connection.
fn forward_deletes(forwards: Vec<(DatanodeRef, BlockId)>) {
    let mut by_node: std::collections::HashMap<String, Vec<BlockId>> = Default::default();
    for (node, block) in forwards {
        by_node.entry(node.address).or_default().push(block);
    }
    for (address, blocks) in by_node {
        let Ok(addr) = address.parse() else { continue };
        let Ok(mut conn) = FramedStream::connect_timeout(&addr, Duration::from_millis(500)) else {
            continue;
        };
        let _ = conn.set_read_timeout(Some(Duration::from_secs(2)));
        for block in blocks {
            if conn.request(&Message::DeleteBlock { block }).is_err() {
                break;
            }
        }
    }
}
