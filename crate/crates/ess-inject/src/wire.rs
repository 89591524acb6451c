//! Fleet implementation that drives a live cluster over the wire protocol,
//! optionally respawning datanodes as child processes.

use std::process::{Child, Command, Stdio};
use std::time::Duration;

use ess_proto::net::FramedStream;
use ess_proto::{DatanodeId, Error, ErrorCode, Fault, Message};
use parking_lot::Mutex;
use serde::Deserialize;

use crate::runner::Fleet;

/// One datanode slot as described in cluster.json.
#[derive(Debug, Clone, Deserialize)]
pub struct SlotConfig {
    pub node_id: u32,
    pub address: String,
    /// Command line that starts a replacement datanode for this slot. The
    /// spawned process must print `<node> <address>` on its first stdout
    /// line, which the ess-datanode binary does.
    #[serde(default)]
    pub respawn_cmd: Option<Vec<String>>,
}

/// cluster.json: component addresses plus the datanode slots.
#[derive(Debug, Clone, Deserialize)]
pub struct ClusterConfig {
    pub namenode: String,
    pub relocator: String,
    pub slots: Vec<SlotConfig>,
}

impl ClusterConfig {
    pub fn load(path: &std::path::Path) -> Result<ClusterConfig, Fault> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fault::protocol(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Fault::protocol(format!("cannot parse {}: {e}", path.display())))
    }
}

struct SlotState {
    node: Option<(DatanodeId, String)>,
    respawn_cmd: Option<Vec<String>>,
    child: Option<Child>,
}

/// Drives a cluster over TCP using the addresses in [`ClusterConfig`].
pub struct WireFleet {
    namenode: String,
    relocator: String,
    slots: Vec<Mutex<SlotState>>,
}

impl WireFleet {
    pub fn new(cfg: ClusterConfig) -> WireFleet {
        WireFleet {
            namenode: cfg.namenode,
            relocator: cfg.relocator,
            slots: cfg
                .slots
                .into_iter()
                .map(|s| {
                    Mutex::new(SlotState {
                        node: Some((DatanodeId(s.node_id), s.address)),
                        respawn_cmd: s.respawn_cmd,
                        child: None,
                    })
                })
                .collect(),
        }
    }

    fn request(addr: &str, msg: &Message) -> Result<Message, Error> {
        let mut conn = FramedStream::connect(addr)?;
        conn.set_read_timeout(Some(Duration::from_secs(5)))?;
        conn.request(msg)
    }
}

impl Fleet for WireFleet {
    fn slots(&self) -> usize {
        self.slots.len()
    }

    fn node_in_slot(&self, slot: usize) -> Option<DatanodeId> {
        self.slots[slot].lock().node.as_ref().map(|(id, _)| *id)
    }

    fn deliver_notice(&self, slot: usize, deadline_in: Duration) -> Result<(), String> {
        let (node, address) = self.slots[slot]
            .lock()
            .node
            .clone()
            .ok_or_else(|| format!("slot {slot} is empty"))?;
        let deadline_in_ms = deadline_in.as_millis() as u64;
        Self::request(
            &self.relocator,
            &Message::BeginDrain {
                node,
                deadline_in_ms,
            },
        )
        .map_err(|e| format!("relocator notice failed: {e}"))?;
        // The relocator also fences the node; racing it is fine since both
        // tolerate the Conflict of the other having won.
        match Self::request(&address, &Message::EnterDraining { deadline_in_ms }) {
            Ok(_) => Ok(()),
            Err(e) if e.is_code(ErrorCode::Conflict) => Ok(()),
            Err(Error::Io(_)) => Ok(()),
            Err(e) => Err(format!("drain fencing failed: {e}")),
        }
    }

    fn terminate(&self, slot: usize) -> Result<(), String> {
        let mut state = self.slots[slot].lock();
        let Some((node, address)) = state.node.take() else {
            return Ok(());
        };
        // The VM dies regardless of drain progress.
        if let Ok(mut conn) = FramedStream::connect(address.as_str()) {
            let _ = conn.send(&Message::Terminate);
        }
        match Self::request(&self.namenode, &Message::MarkLost { node }) {
            Ok(_) => {}
            Err(e) if e.is_code(ErrorCode::Conflict) => {}
            Err(e) => {
                state.node = Some((node, address));
                return Err(format!("namenode termination failed: {e}"));
            }
        }
        if let Some(mut child) = state.child.take() {
            let _ = child.wait();
        }
        Ok(())
    }

    fn respawn(&self, slot: usize) -> Result<DatanodeId, String> {
        let mut state = self.slots[slot].lock();
        let Some(cmd) = state.respawn_cmd.clone() else {
            return Err(format!("slot {slot} has no respawn command"));
        };
        let (program, args) = cmd
            .split_first()
            .ok_or_else(|| format!("slot {slot}: empty respawn command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot spawn {program}: {e}"))?;
        // First stdout line announces "<node> <address>".
        let stdout = child.stdout.take().ok_or("no stdout from child")?;
        let mut line = String::new();
        std::io::BufRead::read_line(&mut std::io::BufReader::new(stdout), &mut line)
            .map_err(|e| format!("cannot read child announcement: {e}"))?;
        let mut parts = line.split_whitespace();
        let id_text = parts.next().unwrap_or("");
        let address = parts.next().unwrap_or("").to_string();
        let id: u32 = id_text
            .strip_prefix("dn")
            .unwrap_or(id_text)
            .parse()
            .map_err(|_| format!("bad child announcement {line:?}"))?;
        let node = DatanodeId(id);
        state.node = Some((node, address));
        state.child = Some(child);
        Ok(node)
    }
}
