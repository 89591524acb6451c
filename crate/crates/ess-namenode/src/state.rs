//! The namenode metadata state machine: namespace, block locations, datanode
//! registry and lifecycle, allocation, relocation commits and loss
//! bookkeeping. Pure in-memory state; the server wraps it in a mutex, which
//! makes every operation linearizable.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::time::Duration;

use ess_proto::clock::Timestamp;
use ess_proto::message::BlockOnNode;
use ess_proto::{
    BlockDescriptor, BlockId, BlockLocation, DatanodeId, DatanodeRef, DatanodeState, Fault,
    ObjectMetadata, ObjectName,
};

/// Placement policy for new blocks. Round-robin keeps equal-capacity nodes
/// balanced deterministically, which also makes the post-preemption imbalance
/// effect observable in benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementPolicy {
    RoundRobin,
}

#[derive(Debug, Clone)]
pub struct NamenodeConfig {
    pub block_size: u32,
    pub heartbeat_timeout: Duration,
    pub placement: PlacementPolicy,
}

impl Default for NamenodeConfig {
    fn default() -> Self {
        NamenodeConfig {
            block_size: ess_proto::DEFAULT_BLOCK_SIZE,
            heartbeat_timeout: Duration::from_secs(5),
            placement: PlacementPolicy::RoundRobin,
        }
    }
}

/// Registry entry for one datanode.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: DatanodeId,
    pub address: String,
    pub capacity_blocks: u32,
    pub used_blocks: u32,
    pub state: DatanodeState,
    pub last_heartbeat: Timestamp,
}

impl NodeRecord {
    fn has_space(&self) -> bool {
        self.used_blocks < self.capacity_blocks
    }

    pub fn node_ref(&self) -> DatanodeRef {
        DatanodeRef {
            id: self.id,
            address: self.address.clone(),
        }
    }
}

#[derive(Debug)]
struct ObjectRecord {
    size: u64,
    version: u64,
    blocks: Vec<BlockId>,
}

#[derive(Debug)]
struct BlockRecord {
    object: ObjectName,
    index: u32,
    length: u32,
    location: BlockLocation,
    version: u64,
}

/// In-memory metadata store. All mutating operations either fully apply or
/// leave the state untouched.
pub struct MetaStore {
    cfg: NamenodeConfig,
    objects: HashMap<ObjectName, ObjectRecord>,
    blocks: HashMap<BlockId, BlockRecord>,
    nodes: BTreeMap<DatanodeId, NodeRecord>,
    next_block: u64,
    next_node: u32,
    /// Last node chosen by round-robin placement.
    rr_cursor: u32,
    allocated_total: u64,
    deleted_total: u64,
}

impl MetaStore {
    pub fn new(cfg: NamenodeConfig) -> MetaStore {
        MetaStore {
            cfg,
            objects: HashMap::new(),
            blocks: HashMap::new(),
            nodes: BTreeMap::new(),
            next_block: 1,
            next_node: 1,
            rr_cursor: 0,
            allocated_total: 0,
            deleted_total: 0,
        }
    }

    pub fn config(&self) -> &NamenodeConfig {
        &self.cfg
    }

    pub fn block_size(&self) -> u32 {
        self.cfg.block_size
    }

    // ---- datanode registry ----

    pub fn register_datanode(
        &mut self,
        address: &str,
        capacity_blocks: u32,
        now: Timestamp,
    ) -> Result<DatanodeId, Fault> {
        if address.parse::<SocketAddr>().is_err() {
            return Err(Fault::protocol(format!(
                "malformed datanode address {address:?}"
            )));
        }
        if capacity_blocks == 0 {
            return Err(Fault::protocol("datanode capacity must be positive"));
        }
        let id = DatanodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(
            id,
            NodeRecord {
                id,
                address: address.to_string(),
                capacity_blocks,
                used_blocks: 0,
                state: DatanodeState::Active,
                last_heartbeat: now,
            },
        );
        Ok(id)
    }

    pub fn heartbeat(&mut self, node: DatanodeId, now: Timestamp) -> Result<(), Fault> {
        let rec = self
            .nodes
            .get_mut(&node)
            .ok_or_else(|| Fault::not_found(format!("unknown datanode {node}")))?;
        if rec.state.is_terminated() {
            return Err(Fault::conflict(format!("{node} is terminated")));
        }
        rec.last_heartbeat = now;
        Ok(())
    }

    /// Terminates every non-terminated node whose last heartbeat is older
    /// than the configured timeout; silence is treated as a zero-warning
    /// preemption. Returns the terminated nodes with their lost-block counts.
    pub fn check_heartbeats(&mut self, now: Timestamp) -> Vec<(DatanodeId, u64)> {
        let stale: Vec<DatanodeId> = self
            .nodes
            .values()
            .filter(|n| {
                !n.state.is_terminated()
                    && now.since(n.last_heartbeat) > self.cfg.heartbeat_timeout
            })
            .map(|n| n.id)
            .collect();
        stale
            .into_iter()
            .map(|id| {
                let lost = self.mark_node_terminated(id).unwrap_or(0);
                (id, lost)
            })
            .collect()
    }

    pub fn node(&self, id: DatanodeId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    /// Per-node located-block counts for nodes in the given state filter.
    pub fn block_counts(&self) -> BTreeMap<DatanodeId, u32> {
        self.nodes
            .values()
            .map(|n| (n.id, n.used_blocks))
            .collect()
    }

    // ---- namespace ----

    pub fn create_object(&mut self, name: &ObjectName) -> Result<(), Fault> {
        if self.objects.contains_key(name) {
            return Err(Fault::already_exists(format!("object {name} exists")));
        }
        self.objects.insert(
            name.clone(),
            ObjectRecord {
                size: 0,
                version: 1,
                blocks: Vec::new(),
            },
        );
        Ok(())
    }

    pub fn get_metadata(
        &self,
        name: &ObjectName,
    ) -> Result<(ObjectMetadata, Vec<DatanodeRef>), Fault> {
        let obj = self
            .objects
            .get(name)
            .ok_or_else(|| Fault::not_found(format!("object {name} not found")))?;
        let mut blocks = Vec::with_capacity(obj.blocks.len());
        let mut refs: BTreeMap<DatanodeId, DatanodeRef> = BTreeMap::new();
        for id in &obj.blocks {
            let rec = &self.blocks[id];
            blocks.push(BlockDescriptor {
                id: *id,
                location: rec.location,
                length: rec.length,
                index: rec.index,
                version: rec.version,
            });
            if let BlockLocation::Node(node) = rec.location {
                if let Some(n) = self.nodes.get(&node) {
                    refs.entry(node).or_insert_with(|| n.node_ref());
                }
            }
        }
        Ok((
            ObjectMetadata {
                name: name.clone(),
                size: obj.size,
                version: obj.version,
                blocks,
            },
            refs.into_values().collect(),
        ))
    }

    /// Removes the object and all its block records. Returns the per-node
    /// delete work for best-effort forwarding to reachable datanodes.
    pub fn delete_object(
        &mut self,
        name: &ObjectName,
    ) -> Result<Vec<(DatanodeRef, BlockId)>, Fault> {
        let obj = self
            .objects
            .remove(name)
            .ok_or_else(|| Fault::not_found(format!("object {name} not found")))?;
        let mut forwards = Vec::new();
        for id in obj.blocks {
            let rec = self.blocks.remove(&id).expect("block record exists");
            self.deleted_total += 1;
            if let BlockLocation::Node(node) = rec.location {
                let n = self.nodes.get_mut(&node).expect("node record exists");
                n.used_blocks = n.used_blocks.saturating_sub(1);
                // Terminated nodes hold no data and refuse connections.
                if !n.state.is_terminated() {
                    forwards.push((n.node_ref(), id));
                }
            }
        }
        Ok(forwards)
    }

    // ---- allocation ----

    /// Round-robin over Active nodes with free capacity, skipping `exclude`.
    fn pick_target(&mut self, exclude: &[DatanodeId]) -> Result<DatanodeId, Fault> {
        let eligible: Vec<DatanodeId> = self
            .nodes
            .values()
            .filter(|n| n.state.is_active() && n.has_space() && !exclude.contains(&n.id))
            .map(|n| n.id)
            .collect();
        if eligible.is_empty() {
            return Err(Fault::capacity_exhausted(
                "no active datanode with free capacity",
            ));
        }
        let chosen = eligible
            .iter()
            .copied()
            .find(|id| id.0 > self.rr_cursor)
            .unwrap_or(eligible[0]);
        self.rr_cursor = chosen.0;
        Ok(chosen)
    }

    /// Appends a new block to an object. Only the final block of an object
    /// may be shorter than the block size, so appends are rejected once a
    /// short block seals the object.
    pub fn allocate_append(
        &mut self,
        object: &ObjectName,
        length: u32,
        exclude: &[DatanodeId],
    ) -> Result<(BlockDescriptor, DatanodeRef), Fault> {
        if length > self.cfg.block_size {
            return Err(Fault::protocol(format!(
                "block length {length} exceeds block size {}",
                self.cfg.block_size
            )));
        }
        let obj = self
            .objects
            .get(object)
            .ok_or_else(|| Fault::not_found(format!("object {object} not found")))?;
        if let Some(last) = obj.blocks.last() {
            if self.blocks[last].length < self.cfg.block_size {
                return Err(Fault::protocol(format!(
                    "object {object} is sealed by a short final block"
                )));
            }
        }
        let target = self.pick_target(exclude)?;
        let id = BlockId(self.next_block);
        self.next_block += 1;
        let obj = self.objects.get_mut(object).expect("checked above");
        let index = obj.blocks.len() as u32;
        obj.blocks.push(id);
        obj.size += length as u64;
        obj.version += 1;
        self.blocks.insert(
            id,
            BlockRecord {
                object: object.clone(),
                index,
                length,
                location: BlockLocation::Node(target),
                version: 1,
            },
        );
        self.allocated_total += 1;
        let node = self.nodes.get_mut(&target).expect("target exists");
        node.used_blocks += 1;
        let desc = BlockDescriptor {
            id,
            location: BlockLocation::Node(target),
            length,
            index,
            version: 1,
        };
        Ok((desc, self.nodes[&target].node_ref()))
    }

    /// Swaps the block at `index` for a freshly placed one, used by clients
    /// whose in-flight write was fenced off by a draining node. The old
    /// block id is retired and never reused.
    pub fn allocate_replace(
        &mut self,
        object: &ObjectName,
        index: u32,
        prev_block: BlockId,
        length: u32,
        exclude: &[DatanodeId],
    ) -> Result<(BlockDescriptor, DatanodeRef), Fault> {
        if length > self.cfg.block_size {
            return Err(Fault::protocol(format!(
                "block length {length} exceeds block size {}",
                self.cfg.block_size
            )));
        }
        let obj = self
            .objects
            .get(object)
            .ok_or_else(|| Fault::not_found(format!("object {object} not found")))?;
        let slot = obj.blocks.get(index as usize).copied();
        match slot {
            None => {
                return Err(Fault::protocol(format!(
                    "object {object} has no block index {index}"
                )))
            }
            Some(current) if current != prev_block => {
                return Err(Fault::stale_location(format!(
                    "block at index {index} is {current}, not {prev_block}"
                )))
            }
            Some(_) => {}
        }
        let target = self.pick_target(exclude)?;
        let old = self.blocks.remove(&prev_block).expect("slot checked");
        if let BlockLocation::Node(node) = old.location {
            let n = self.nodes.get_mut(&node).expect("node record exists");
            n.used_blocks = n.used_blocks.saturating_sub(1);
        }
        self.deleted_total += 1;
        let id = BlockId(self.next_block);
        self.next_block += 1;
        let obj = self.objects.get_mut(object).expect("checked above");
        obj.blocks[index as usize] = id;
        obj.size = obj.size - old.length as u64 + length as u64;
        obj.version += 1;
        self.blocks.insert(
            id,
            BlockRecord {
                object: object.clone(),
                index,
                length,
                location: BlockLocation::Node(target),
                version: 1,
            },
        );
        self.allocated_total += 1;
        let node = self.nodes.get_mut(&target).expect("target exists");
        node.used_blocks += 1;
        let desc = BlockDescriptor {
            id,
            location: BlockLocation::Node(target),
            length,
            index,
            version: 1,
        };
        Ok((desc, self.nodes[&target].node_ref()))
    }

    /// Proposes a relocation target for an existing block without committing
    /// anything; capacity is enforced again at commit time.
    pub fn allocate_destination(
        &mut self,
        block: BlockId,
        exclude: &[DatanodeId],
    ) -> Result<(BlockDescriptor, DatanodeRef), Fault> {
        let rec = self
            .blocks
            .get(&block)
            .ok_or_else(|| Fault::not_found(format!("unknown block {block}")))?;
        let (length, index, version, location) =
            (rec.length, rec.index, rec.version, rec.location);
        let source = match location {
            BlockLocation::Lost => {
                return Err(Fault::conflict(format!("block {block} is lost")))
            }
            BlockLocation::Node(n) => n,
        };
        let mut exclude = exclude.to_vec();
        if !exclude.contains(&source) {
            exclude.push(source);
        }
        let target = self.pick_target(&exclude)?;
        let desc = BlockDescriptor {
            id: block,
            location: BlockLocation::Node(target),
            length,
            index,
            version,
        };
        Ok((desc, self.nodes[&target].node_ref()))
    }

    // ---- relocation and loss ----

    pub fn begin_drain(&mut self, node: DatanodeId, deadline: Timestamp) -> Result<(), Fault> {
        let rec = self
            .nodes
            .get_mut(&node)
            .ok_or_else(|| Fault::not_found(format!("unknown datanode {node}")))?;
        match rec.state {
            DatanodeState::Active => {
                rec.state = DatanodeState::Draining(deadline);
                Ok(())
            }
            DatanodeState::Draining(_) => {
                Err(Fault::conflict(format!("{node} is already draining")))
            }
            DatanodeState::Terminated => {
                Err(Fault::conflict(format!("{node} is terminated")))
            }
        }
    }

    /// Compare-and-set flip of a block's location. `expected_version` must
    /// match the block's current version; on success the version becomes
    /// `expected_version + 1` and capacity accounting moves with the block.
    pub fn commit_relocation(
        &mut self,
        block: BlockId,
        new_node: DatanodeId,
        expected_version: u64,
    ) -> Result<u64, Fault> {
        let rec = self
            .blocks
            .get(&block)
            .ok_or_else(|| Fault::not_found(format!("unknown block {block}")))?;
        let old_node = match rec.location {
            BlockLocation::Lost => {
                return Err(Fault::conflict(format!("block {block} is lost")))
            }
            BlockLocation::Node(n) => n,
        };
        if rec.version != expected_version {
            return Err(Fault::stale_location(format!(
                "block {block} is at version {}, expected {expected_version}",
                rec.version
            )));
        }
        if old_node == new_node {
            return Err(Fault::conflict(format!(
                "block {block} already resides on {new_node}"
            )));
        }
        let target = self
            .nodes
            .get(&new_node)
            .ok_or_else(|| Fault::not_found(format!("unknown datanode {new_node}")))?;
        if !target.state.is_active() {
            return Err(Fault::node_draining(format!(
                "relocation target {new_node} is not active"
            )));
        }
        if !target.has_space() {
            return Err(Fault::capacity_exhausted(format!(
                "relocation target {new_node} is full"
            )));
        }
        let rec = self.blocks.get_mut(&block).expect("checked above");
        rec.location = BlockLocation::Node(new_node);
        rec.version += 1;
        let new_version = rec.version;
        let object = rec.object.clone();
        self.objects
            .get_mut(&object)
            .expect("owning object exists")
            .version += 1;
        self.nodes.get_mut(&old_node).expect("old node exists").used_blocks -= 1;
        self.nodes.get_mut(&new_node).expect("checked above").used_blocks += 1;
        Ok(new_version)
    }

    /// Lists every block whose committed location is `node`, with owning
    /// object names, ordered by block id.
    pub fn list_blocks_on_node(&self, node: DatanodeId) -> Result<Vec<BlockOnNode>, Fault> {
        if !self.nodes.contains_key(&node) {
            return Err(Fault::not_found(format!("unknown datanode {node}")));
        }
        let mut out: Vec<BlockOnNode> = self
            .blocks
            .iter()
            .filter(|(_, rec)| rec.location == BlockLocation::Node(node))
            .map(|(id, rec)| BlockOnNode {
                object: rec.object.clone(),
                block: BlockDescriptor {
                    id: *id,
                    location: rec.location,
                    length: rec.length,
                    index: rec.index,
                    version: rec.version,
                },
            })
            .collect();
        out.sort_by_key(|b| b.block.id);
        Ok(out)
    }

    /// Terminates a node: every block still located there becomes Lost,
    /// which is terminal. Returns the number of blocks lost.
    pub fn mark_node_terminated(&mut self, node: DatanodeId) -> Result<u64, Fault> {
        let rec = self
            .nodes
            .get_mut(&node)
            .ok_or_else(|| Fault::not_found(format!("unknown datanode {node}")))?;
        if rec.state.is_terminated() {
            return Err(Fault::conflict(format!("{node} is already terminated")));
        }
        rec.state = DatanodeState::Terminated;
        rec.used_blocks = 0;
        let stranded: Vec<BlockId> = self
            .blocks
            .iter()
            .filter(|(_, b)| b.location == BlockLocation::Node(node))
            .map(|(id, _)| *id)
            .collect();
        let lost = stranded.len() as u64;
        for id in stranded {
            let b = self.blocks.get_mut(&id).expect("just listed");
            b.location = BlockLocation::Lost;
            b.version += 1;
            let object = b.object.clone();
            self.objects
                .get_mut(&object)
                .expect("owning object exists")
                .version += 1;
        }
        Ok(lost)
    }

    // ---- accounting and invariants ----

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn lost_block_count(&self) -> u64 {
        self.blocks
            .values()
            .filter(|b| b.location.is_lost())
            .count() as u64
    }

    pub fn allocated_total(&self) -> u64 {
        self.allocated_total
    }

    pub fn deleted_total(&self) -> u64 {
        self.deleted_total
    }

    /// Structural invariants, used by tests after every step of generated
    /// operation sequences.
    pub fn check_invariants(&self) -> Result<(), String> {
        // Per-node used_blocks agrees with the block map.
        let mut per_node: BTreeMap<DatanodeId, u32> = BTreeMap::new();
        for rec in self.blocks.values() {
            if let BlockLocation::Node(n) = rec.location {
                *per_node.entry(n).or_default() += 1;
                let node = self
                    .nodes
                    .get(&n)
                    .ok_or_else(|| format!("block on unregistered node {n}"))?;
                if node.state.is_terminated() {
                    return Err(format!("block located on terminated node {n}"));
                }
            }
        }
        for node in self.nodes.values() {
            let counted = per_node.get(&node.id).copied().unwrap_or(0);
            if node.used_blocks != counted {
                return Err(format!(
                    "{}: used_blocks {} != counted {counted}",
                    node.id, node.used_blocks
                ));
            }
            if node.used_blocks > node.capacity_blocks {
                return Err(format!("{} above capacity", node.id));
            }
        }
        // Conservation: live + lost == allocated - deleted.
        let live_or_lost = self.blocks.len() as u64;
        if live_or_lost != self.allocated_total - self.deleted_total {
            return Err(format!(
                "conservation violated: {live_or_lost} blocks vs allocated {} - deleted {}",
                self.allocated_total, self.deleted_total
            ));
        }
        // Object structure: size, gapless indices, short block only last.
        for (name, obj) in &self.objects {
            let mut size = 0u64;
            for (i, id) in obj.blocks.iter().enumerate() {
                let rec = self
                    .blocks
                    .get(id)
                    .ok_or_else(|| format!("{name} references missing {id}"))?;
                if rec.index as usize != i {
                    return Err(format!("{name} block {id} has index {} at slot {i}", rec.index));
                }
                if rec.object != *name {
                    return Err(format!("{name} block {id} owned by {}", rec.object));
                }
                if rec.length < self.cfg.block_size && i + 1 != obj.blocks.len() {
                    return Err(format!("{name} has a short non-final block"));
                }
                size += rec.length as u64;
            }
            if size != obj.size {
                return Err(format!("{name} size {} != sum {size}", obj.size));
            }
        }
        // Every block record belongs to a live object.
        for (id, rec) in &self.blocks {
            if !self.objects.contains_key(&rec.object) {
                return Err(format!("{id} owned by deleted object {}", rec.object));
            }
        }
        Ok(())
    }
}
