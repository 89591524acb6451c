//! In-process cluster orchestration for tests and benchmarks: a namenode,
//! a relocator with its control endpoint, and a fleet of datanode slots that
//! can be preempted and respawned. Implements the injector's `Fleet` trait
//! so model-driven preemption schedules can run against a live in-process
//! cluster.

use std::sync::Arc;
use std::time::Duration;

use ess_client::{Client, ClientConfig};
use ess_datanode::{DatanodeConfig, DatanodeHandle};
use ess_inject::Fleet;
use ess_namenode::{NamenodeConfig, NamenodeHandle};
use ess_proto::clock::{Clock, SystemClock};
use ess_proto::net::FramedStream;
use ess_proto::{DatanodeId, ErrorCode, Message};
use ess_relocator::{Relocator, RelocatorConfig, RelocatorServiceHandle};
use parking_lot::Mutex;

/// Shape of the in-process cluster.
#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub datanodes: usize,
    pub capacity_blocks: u32,
    pub block_size: u32,
    pub egress_limit: Option<u64>,
    pub ingress_limit: Option<u64>,
    pub heartbeat_timeout: Duration,
    pub relocator_parallelism: usize,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            datanodes: 4,
            capacity_blocks: 64,
            block_size: 64 * 1024,
            egress_limit: None,
            ingress_limit: None,
            heartbeat_timeout: Duration::from_secs(5),
            relocator_parallelism: 4,
        }
    }
}

impl ClusterSpec {
    /// The desk-scale shape: four datanodes holding 256 blocks of 1 MiB
    /// each, 50 MB/s egress, sized so a 10s notice drains one node with
    /// about half the window to spare.
    pub fn desk_scale() -> ClusterSpec {
        ClusterSpec {
            datanodes: 4,
            capacity_blocks: 384,
            block_size: 1024 * 1024,
            egress_limit: Some(50_000_000),
            ingress_limit: None,
            heartbeat_timeout: Duration::from_secs(5),
            relocator_parallelism: 4,
        }
    }
}

/// A running in-process cluster.
pub struct Cluster {
    spec: ClusterSpec,
    clock: Arc<SystemClock>,
    pub nn: NamenodeHandle,
    relocator: Arc<Relocator>,
    relocator_service: RelocatorServiceHandle,
    slots: Vec<Mutex<Option<DatanodeHandle>>>,
}

impl Cluster {
    pub fn start(spec: ClusterSpec) -> Cluster {
        let clock = Arc::new(SystemClock::new());
        let nn = ess_namenode::spawn(
            NamenodeConfig {
                block_size: spec.block_size,
                heartbeat_timeout: spec.heartbeat_timeout,
                ..NamenodeConfig::default()
            },
            "127.0.0.1:0",
            clock.clone(),
        )
        .expect("namenode binds");
        let relocator = Arc::new(Relocator::new(
            RelocatorConfig {
                namenode: nn.addr().to_string(),
                parallelism: spec.relocator_parallelism,
                report_file: None,
            },
            clock.clone(),
        ));
        let relocator_service =
            ess_relocator::spawn(relocator.clone(), "127.0.0.1:0").expect("relocator binds");
        let slots = (0..spec.datanodes)
            .map(|_| Mutex::new(Some(spawn_datanode(&spec, &nn, clock.clone()))))
            .collect();
        Cluster {
            spec,
            clock,
            nn,
            relocator,
            relocator_service,
            slots,
        }
    }

    pub fn spec(&self) -> &ClusterSpec {
        &self.spec
    }

    pub fn clock(&self) -> Arc<SystemClock> {
        self.clock.clone()
    }

    pub fn namenode_addr(&self) -> String {
        self.nn.addr().to_string()
    }

    pub fn relocator_addr(&self) -> std::net::SocketAddr {
        self.relocator_service.addr()
    }

    pub fn relocator(&self) -> Arc<Relocator> {
        self.relocator.clone()
    }

    /// A client wired to this cluster with a matching block size.
    pub fn client(&self) -> Client {
        self.client_with(|_| {})
    }

    pub fn client_with(&self, tweak: impl FnOnce(&mut ClientConfig)) -> Client {
        let mut cfg = ClientConfig::new(self.namenode_addr());
        cfg.block_size = self.spec.block_size;
        tweak(&mut cfg);
        Client::new(cfg, self.clock.clone())
    }

    pub fn node_in_slot(&self, slot: usize) -> Option<DatanodeId> {
        self.slots[slot].lock().as_ref().map(|d| d.node_id())
    }

    pub fn slot_of(&self, node: DatanodeId) -> Option<usize> {
        (0..self.slots.len()).find(|&s| self.node_in_slot(s) == Some(node))
    }

    pub fn live_node_ids(&self) -> Vec<DatanodeId> {
        (0..self.slots.len())
            .filter_map(|s| self.node_in_slot(s))
            .collect()
    }

    /// Per-live-node committed block counts, in slot order.
    pub fn live_block_counts(&self) -> Vec<u32> {
        let ids = self.live_node_ids();
        self.nn.with_state(|ms| {
            ids.iter()
                .map(|id| ms.node(*id).map(|n| n.used_blocks).unwrap_or(0))
                .collect()
        })
    }

    pub fn with_datanode<T>(
        &self,
        slot: usize,
        f: impl FnOnce(&DatanodeHandle) -> T,
    ) -> Option<T> {
        self.slots[slot].lock().as_ref().map(f)
    }

    /// Synchronous preemption cycle: notice, drain, hard termination at the
    /// deadline, then optionally a respawned replacement. Returns the drain
    /// report and the replacement's id.
    pub fn preempt_slot(
        &self,
        slot: usize,
        notice: Duration,
        respawn: bool,
    ) -> (ess_relocator::RelocationReport, Option<DatanodeId>) {
        let node = self.node_in_slot(slot).expect("slot is occupied");
        let t0 = self.clock.now();
        let report = self
            .relocator
            .handle_notice(node, notice)
            .expect("drain runs");
        // The VM dies at the deadline no matter how the drain went.
        self.clock.sleep_until(t0 + notice);
        self.terminate(slot).expect("terminate slot");
        let replacement = respawn.then(|| self.respawn(slot).expect("respawn slot"));
        (report, replacement)
    }
}

fn spawn_datanode(
    spec: &ClusterSpec,
    nn: &NamenodeHandle,
    clock: Arc<SystemClock>,
) -> DatanodeHandle {
    let mut cfg = DatanodeConfig::new(nn.addr().to_string(), spec.capacity_blocks);
    cfg.block_size = spec.block_size;
    cfg.egress_limit = spec.egress_limit;
    cfg.ingress_limit = spec.ingress_limit;
    ess_datanode::spawn(cfg, clock).expect("datanode spawns")
}

impl Fleet for Cluster {
    fn slots(&self) -> usize {
        self.slots.len()
    }

    fn node_in_slot(&self, slot: usize) -> Option<DatanodeId> {
        Cluster::node_in_slot(self, slot)
    }

    fn deliver_notice(&self, slot: usize, deadline_in: Duration) -> Result<(), String> {
        let (node, addr) = {
            let guard = self.slots[slot].lock();
            let dn = guard.as_ref().ok_or_else(|| format!("slot {slot} empty"))?;
            (dn.node_id(), dn.addr())
        };
        let deadline_in_ms = deadline_in.as_millis() as u64;
        // Notice to the relocator's control endpoint; the drain runs on the
        // relocator's own threads.
        let mut conn = FramedStream::connect(self.relocator_service.addr())
            .map_err(|e| format!("relocator unreachable: {e}"))?;
        conn.request(&Message::BeginDrain {
            node,
            deadline_in_ms,
        })
        .map_err(|e| format!("notice rejected: {e}"))?;
        // Fencing straight to the node as well, racing the relocator's own
        // EnterDraining; both tolerate losing.
        match FramedStream::connect(addr)
            .and_then(|mut c| c.request(&Message::EnterDraining { deadline_in_ms }))
        {
            Ok(_) => Ok(()),
            Err(e) if e.is_code(ErrorCode::Conflict) => Ok(()),
            Err(ess_proto::Error::Io(_)) => Ok(()),
            Err(e) => Err(format!("drain fencing failed: {e}")),
        }
    }

    fn terminate(&self, slot: usize) -> Result<(), String> {
        let handle = self.slots[slot].lock().take();
        let Some(mut handle) = handle else {
            return Ok(());
        };
        let node = handle.node_id();
        handle.terminate();
        match self.nn.with_state(|ms| ms.mark_node_terminated(node)) {
            Ok(lost) => {
                if lost > 0 {
                    log::warn!("{node} terminated, {lost} blocks lost");
                }
            }
            // The relocator may have marked it already.
            Err(f) if f.code == ErrorCode::Conflict => {}
            Err(f) => return Err(format!("loss bookkeeping failed: {f}")),
        }
        Ok(())
    }

    fn respawn(&self, slot: usize) -> Result<DatanodeId, String> {
        let mut guard = self.slots[slot].lock();
        if guard.is_some() {
            return Err(format!("slot {slot} is still occupied"));
        }
        let dn = spawn_datanode(&self.spec, &self.nn, self.clock.clone());
        let id = dn.node_id();
        *guard = Some(dn);
        Ok(id)
    }
}
