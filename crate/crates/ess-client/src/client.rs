//! Client library: objects are written block-by-block, reads follow cached
//! metadata and transparently recover from relocations by invalidating the
//! cache and retrying against fresh locations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ess_proto::clock::Clock;
use ess_proto::crc::crc32;
use ess_proto::message::AllocateRequest;
use ess_proto::net::ConnPool;
use ess_proto::types::split_into_blocks;
use ess_proto::{
    BlockDescriptor, BlockId, DatanodeId, DatanodeRef, Error, ErrorCode, Fault, Message,
    ObjectMetadata, ObjectName, Result,
};
use parking_lot::Mutex;

use crate::cache::MetadataCache;

/// Retry behavior for data operations.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Data attempts per block beyond the first.
    pub max_retries: u32,
    /// Wait between placement retries while the cluster has no capacity,
    /// e.g. when every surviving node is draining until a replacement spawns.
    pub drain_poll_interval: Duration,
    /// Backoff schedule indexed by retry number (last entry repeats).
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            drain_poll_interval: Duration::from_millis(250),
            backoff: [0u64, 100, 200, 400, 800]
                .iter()
                .map(|ms| Duration::from_millis(*ms))
                .collect(),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let idx = (retry as usize).min(self.backoff.len().saturating_sub(1));
        self.backoff.get(idx).copied().unwrap_or(Duration::ZERO)
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub namenode: String,
    /// Must match the cluster-wide block size configured on the namenode.
    pub block_size: u32,
    pub retry: RetryPolicy,
    pub cache_capacity: usize,
    /// Concurrent block fetches per get.
    pub fetch_fanout: usize,
    /// Map NotFound on delete to success.
    pub idempotent_delete: bool,
}

impl ClientConfig {
    pub fn new(namenode: impl Into<String>) -> ClientConfig {
        ClientConfig {
            namenode: namenode.into(),
            block_size: ess_proto::DEFAULT_BLOCK_SIZE,
            retry: RetryPolicy::default(),
            cache_capacity: 1024,
            fetch_fanout: 8,
            idempotent_delete: false,
        }
    }
}

/// Cumulative operation counters, shared across all users of one client.
#[derive(Debug, Default)]
pub struct ClientMetrics {
    pub metadata_fetches: AtomicU64,
    /// Data attempts that failed against a stale location and were retried.
    pub stale_retries: AtomicU64,
    /// Writes bounced by a draining or dead node and re-placed.
    pub write_fenced: AtomicU64,
    pub data_unavailable: AtomicU64,
    pub puts: AtomicU64,
    pub gets: AtomicU64,
    pub deletes: AtomicU64,
    pub bytes_written: AtomicU64,
    pub bytes_read: AtomicU64,
}

/// Point-in-time copy of [`ClientMetrics`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricsSnapshot {
    pub metadata_fetches: u64,
    pub stale_retries: u64,
    pub write_fenced: u64,
    pub data_unavailable: u64,
    pub puts: u64,
    pub gets: u64,
    pub deletes: u64,
    pub bytes_written: u64,
    pub bytes_read: u64,
}

impl ClientMetrics {
    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            metadata_fetches: self.metadata_fetches.load(Ordering::Relaxed),
            stale_retries: self.stale_retries.load(Ordering::Relaxed),
            write_fenced: self.write_fenced.load(Ordering::Relaxed),
            data_unavailable: self.data_unavailable.load(Ordering::Relaxed),
            puts: self.puts.load(Ordering::Relaxed),
            gets: self.gets.load(Ordering::Relaxed),
            deletes: self.deletes.load(Ordering::Relaxed),
            bytes_written: self.bytes_written.load(Ordering::Relaxed),
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
        }
    }
}

/// Handle to the datastore. Safe to share across threads.
pub struct Client {
    cfg: ClientConfig,
    cache: MetadataCache,
    /// Datanode ids are never reused, so this address book only grows.
    nodes: Mutex<HashMap<DatanodeId, String>>,
    /// Per-object gate so concurrent stale readers trigger one refresh.
    refresh_gates: Mutex<HashMap<ObjectName, Arc<Mutex<()>>>>,
    pool: ConnPool,
    metrics: Arc<ClientMetrics>,
    clock: Arc<dyn Clock>,
}

impl Client {
    pub fn new(cfg: ClientConfig, clock: Arc<dyn Clock>) -> Client {
        Client {
            cache: MetadataCache::new(cfg.cache_capacity),
            cfg,
            nodes: Mutex::new(HashMap::new()),
            refresh_gates: Mutex::new(HashMap::new()),
            pool: ConnPool::new(16),
            metrics: Arc::new(ClientMetrics::default()),
            clock,
        }
    }

    pub fn metrics(&self) -> Arc<ClientMetrics> {
        self.metrics.clone()
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    fn namenode_request(&self, msg: &Message) -> Result<Message> {
        self.pool.with_conn(&self.cfg.namenode, |c| c.request(msg))
    }

    fn register_nodes(&self, refs: &[DatanodeRef]) {
        if refs.is_empty() {
            return;
        }
        let mut nodes = self.nodes.lock();
        for r in refs {
            nodes.entry(r.id).or_insert_with(|| r.address.clone());
        }
    }

    fn node_address(&self, id: DatanodeId) -> Option<String> {
        self.nodes.lock().get(&id).cloned()
    }

    // ---- metadata ----

    /// Bypasses the cache, stores the result, and returns it. Versions only
    /// ever move forward on the namenode, so anything returned here is at
    /// least as new as previously observed metadata.
    pub fn lookup_fresh(&self, name: &ObjectName) -> Result<ObjectMetadata> {
        let resp = self.namenode_request(&Message::GetMetadata { name: name.clone() })?;
        match resp {
            Message::GetMetadataOk { meta, nodes } => {
                self.metrics.metadata_fetches.fetch_add(1, Ordering::Relaxed);
                self.register_nodes(&nodes);
                self.cache.insert(meta.clone(), self.clock.now());
                Ok(meta)
            }
            other => Err(unexpected(&other)),
        }
    }

    /// Drops the cached entry for `name`; absent entries are a no-op.
    pub fn invalidate(&self, name: &ObjectName) {
        self.cache.invalidate(name);
    }

    /// Refresh used on the failure path: concurrent callers that observed the
    /// same stale version share a single fetch.
    fn refresh_after_failure(
        &self,
        name: &ObjectName,
        observed_version: u64,
    ) -> Result<ObjectMetadata> {
        let gate = {
            let mut gates = self.refresh_gates.lock();
            gates
                .entry(name.clone())
                .or_insert_with(|| Arc::new(Mutex::new(())))
                .clone()
        };
        let _g = gate.lock();
        if let Some(cached) = self.cache.get(name) {
            if cached.version > observed_version {
                return Ok(cached);
            }
        }
        self.cache.invalidate(name);
        self.lookup_fresh(name)
    }

    // ---- data plane ----

    /// Creates `name` with `data`, splitting into blocks of the configured
    /// size. Objects are immutable once written; overwriting requires delete
    /// followed by a fresh put. A write bounced by a draining node is
    /// transparently re-placed onto an active one.
    pub fn put_object(&self, name: &ObjectName, data: &[u8]) -> Result<ObjectMetadata> {
        match self.namenode_request(&Message::CreateObject { name: name.clone() })? {
            Message::CreateObjectOk => {}
            other => return Err(unexpected(&other)),
        }
        let lengths = split_into_blocks(data.len() as u64, self.cfg.block_size);
        let mut offset = 0usize;
        for (index, len) in lengths.into_iter().enumerate() {
            let chunk = &data[offset..offset + len as usize];
            offset += len as usize;
            let (desc, target) = self.allocate(AllocateRequest::Append {
                object: name.clone(),
                length: len,
                exclude: vec![],
            })?;
            self.write_block_with_retry(name, index as u32, desc, target, chunk)?;
        }
        self.metrics.puts.fetch_add(1, Ordering::Relaxed);
        self.metrics
            .bytes_written
            .fetch_add(data.len() as u64, Ordering::Relaxed);
        self.lookup_fresh(name)
    }

    fn allocate(&self, req: AllocateRequest) -> Result<(BlockDescriptor, DatanodeRef)> {
        match self.namenode_request(&Message::AllocateBlock(req))? {
            Message::AllocateBlockOk { block, target } => {
                self.register_nodes(std::slice::from_ref(&target));
                Ok((block, target))
            }
            other => Err(unexpected(&other)),
        }
    }

    fn write_once(&self, addr: &str, block: BlockId, chunk: &[u8]) -> Result<()> {
        self.pool.with_conn(addr, |c| {
            match c.request(&Message::WriteBlock {
                block,
                offset: 0,
                crc: crc32(chunk),
                data: chunk.to_vec(),
            })? {
                Message::WriteBlockOk => Ok(()),
                other => Err(unexpected(&other)),
            }
        })
    }

    fn write_block_with_retry(
        &self,
        name: &ObjectName,
        index: u32,
        mut desc: BlockDescriptor,
        mut target: DatanodeRef,
        chunk: &[u8],
    ) -> Result<()> {
        let policy = &self.cfg.retry;
        let mut retries = 0u32;
        loop {
            let mut last_err = match self.write_once(&target.address, desc.id, chunk) {
                Ok(()) => return Ok(()),
                Err(e) if write_needs_replacement(&e) => e,
                Err(e) => return Err(e),
            };
            self.metrics.write_fenced.fetch_add(1, Ordering::Relaxed);
            self.invalidate(name);
            // The allocation fence guarantees a fresh placement avoids the
            // draining node, so re-allocate rather than wait out the drain.
            loop {
                if retries >= policy.max_retries {
                    return Err(last_err);
                }
                retries += 1;
                self.clock.sleep(policy.delay(retries - 1));
                match self.allocate(AllocateRequest::Replace {
                    object: name.clone(),
                    index,
                    prev_block: desc.id,
                    length: chunk.len() as u32,
                    exclude: vec![target.id],
                }) {
                    Ok((d, t)) => {
                        desc = d;
                        target = t;
                        break;
                    }
                    Err(e) if e.is_code(ErrorCode::CapacityExhausted) => {
                        // Nowhere to place right now; poll until a node
                        // frees up or a replacement registers.
                        last_err = e;
                        self.clock.sleep(policy.drain_poll_interval);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    /// Reads the full object. Stale cached locations are invalidated and
    /// retried against fresh metadata; a Lost block surfaces as
    /// DataUnavailable.
    pub fn get_object(&self, name: &ObjectName) -> Result<Vec<u8>> {
        let meta = match self.cache.get(name) {
            Some(meta) => meta,
            None => self.lookup_fresh(name)?,
        };
        let n = meta.blocks.len();
        if n == 0 {
            self.metrics.gets.fetch_add(1, Ordering::Relaxed);
            return Ok(Vec::new());
        }
        let slots: Vec<Mutex<Option<Vec<u8>>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let failed: Mutex<Option<Error>> = Mutex::new(None);
        let cursor = AtomicUsize::new(0);
        let workers = self.cfg.fetch_fanout.max(1).min(n);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= n || failed.lock().is_some() {
                        return;
                    }
                    match self.fetch_block(name, &meta, i) {
                        Ok(bytes) => *slots[i].lock() = Some(bytes),
                        Err(e) => {
                            let mut failed = failed.lock();
                            if failed.is_none() {
                                *failed = Some(e);
                            }
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = failed.into_inner() {
            return Err(e);
        }
        let mut out = Vec::with_capacity(meta.size as usize);
        for slot in slots {
            out.extend_from_slice(&slot.into_inner().expect("all slots filled"));
        }
        self.metrics.gets.fetch_add(1, Ordering::Relaxed);
        self.metrics
            .bytes_read
            .fetch_add(out.len() as u64, Ordering::Relaxed);
        Ok(out)
    }

    fn read_once(&self, addr: &str, block: BlockId, len: u32) -> Result<Vec<u8>> {
        self.pool.with_conn(addr, |c| {
            match c.request(&Message::ReadBlock {
                block,
                offset: 0,
                len,
            })? {
                Message::ReadBlockOk { crc, data } => {
                    if data.len() != len as usize {
                        return Err(Fault::protocol(format!(
                            "short read: {} of {len} bytes",
                            data.len()
                        ))
                        .into());
                    }
                    if crc32(&data) != crc {
                        return Err(Fault::protocol("read payload CRC mismatch").into());
                    }
                    Ok(data)
                }
                other => Err(unexpected(&other)),
            }
        })
    }

    fn fetch_block(
        &self,
        name: &ObjectName,
        initial: &ObjectMetadata,
        index: usize,
    ) -> Result<Vec<u8>> {
        let policy = &self.cfg.retry;
        let mut desc = initial.blocks[index];
        let mut observed_version = initial.version;
        let mut retries = 0u32;
        loop {
            let node = match desc.location {
                ess_proto::BlockLocation::Lost => {
                    self.metrics.data_unavailable.fetch_add(1, Ordering::Relaxed);
                    return Err(Fault::data_unavailable(format!(
                        "block {} of {name} was lost to a preemption",
                        desc.index
                    ))
                    .into());
                }
                ess_proto::BlockLocation::Node(node) => node,
            };
            let outcome = match self.node_address(node) {
                // Unknown address: metadata predates our address book, treat
                // like a stale location and refresh.
                None => Err(Error::from(Fault::stale_location(format!(
                    "no address for {node}"
                )))),
                Some(addr) => self.read_once(&addr, desc.id, desc.length),
            };
            let err = match outcome {
                Ok(bytes) => return Ok(bytes),
                Err(e) => e,
            };
            if retries >= policy.max_retries {
                return Err(err);
            }
            retries += 1;
            self.metrics.stale_retries.fetch_add(1, Ordering::Relaxed);
            self.clock.sleep(policy.delay(retries - 1));
            if err.is_location_failure() {
                let fresh = self.refresh_after_failure(name, observed_version)?;
                observed_version = fresh.version;
                desc = *fresh.blocks.get(index).ok_or_else(|| {
                    Fault::not_found(format!("{name} no longer has block index {index}"))
                })?;
            }
        }
    }

    /// Deletes `name`. With `idempotent_delete`, deleting an absent object
    /// succeeds.
    pub fn delete_object(&self, name: &ObjectName) -> Result<()> {
        self.invalidate(name);
        match self.namenode_request(&Message::DeleteObject { name: name.clone() }) {
            Ok(Message::DeleteObjectOk) => {
                self.metrics.deletes.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }
            Ok(other) => Err(unexpected(&other)),
            Err(e) if self.cfg.idempotent_delete && e.is_code(ErrorCode::NotFound) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Read with lineage-style recovery: when the datastore reports
    /// DataUnavailable, remnants are deleted, the caller-supplied generator
    /// re-produces the content, and the result is stored and returned. If a
    /// concurrent caller re-created the object first, its copy wins.
    pub fn recompute_hook(
        &self,
        name: &ObjectName,
        generator: &(dyn Fn() -> Vec<u8> + Sync),
    ) -> Result<Vec<u8>> {
        let attempts = self.cfg.retry.max_retries.max(1);
        for _ in 0..attempts {
            match self.get_object(name) {
                Ok(bytes) => return Ok(bytes),
                Err(e) if e.is_code(ErrorCode::DataUnavailable) => {
                    match self.delete_object(name) {
                        Ok(()) => {}
                        Err(e) if e.is_code(ErrorCode::NotFound) => {}
                        Err(e) => return Err(e),
                    }
                    let bytes = generator();
                    match self.put_object(name, &bytes) {
                        Ok(_) => return Ok(bytes),
                        // Another caller won the re-create race; loop to
                        // read their copy.
                        Err(e) if e.is_code(ErrorCode::AlreadyExists) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(Fault::conflict(format!("{name} kept disappearing during regeneration")).into())
    }
}

fn write_needs_replacement(e: &Error) -> bool {
    matches!(e, Error::Io(_))
        || e.is_code(ErrorCode::NodeDraining)
        || e.is_code(ErrorCode::CapacityExhausted)
}

fn unexpected(msg: &Message) -> Error {
    Fault::protocol(format!("unexpected response type {:#04x}", msg.type_byte())).into()
}
