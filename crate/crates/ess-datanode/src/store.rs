//! In-memory block storage with CRC integrity, write fencing during drain,
//! and hard termination that drops all state.

use std::collections::HashMap;

use ess_proto::clock::Timestamp;
use ess_proto::crc::{crc32, crc32_update};
use ess_proto::{BlockId, DatanodeState, Fault};
use parking_lot::RwLock;

struct Block {
    /// Written extent, contiguous from offset zero.
    data: Vec<u8>,
    /// CRC of the full written extent, kept in lockstep with `data`.
    crc: u32,
}

struct Inner {
    blocks: HashMap<BlockId, Block>,
    state: DatanodeState,
}

/// Block store for one datanode. Reads share a lock and copy out; writes and
/// lifecycle transitions are exclusive, so the transition to Draining acts as
/// a write barrier: once `enter_draining` returns, no write mutates the
/// store, while reads keep being served until termination.
pub struct BlockStore {
    inner: RwLock<Inner>,
    capacity_blocks: u32,
    block_size: u32,
}

impl BlockStore {
    pub fn new(capacity_blocks: u32, block_size: u32) -> BlockStore {
        BlockStore {
            inner: RwLock::new(Inner {
                blocks: HashMap::new(),
                state: DatanodeState::Active,
            }),
            capacity_blocks,
            block_size,
        }
    }

    pub fn state(&self) -> DatanodeState {
        self.inner.read().state
    }

    pub fn block_count(&self) -> usize {
        self.inner.read().blocks.len()
    }

    pub fn capacity_blocks(&self) -> u32 {
        self.capacity_blocks
    }

    /// Stores `data` at `offset`, verifying the payload CRC first. Writes
    /// must extend or overwrite the existing extent (no holes).
    pub fn write_block(
        &self,
        block: BlockId,
        offset: u32,
        data: &[u8],
        crc: u32,
    ) -> Result<(), Fault> {
        if crc32(data) != crc {
            return Err(Fault::protocol(format!(
                "payload CRC mismatch on {block}"
            )));
        }
        let end = offset as u64 + data.len() as u64;
        if end > self.block_size as u64 {
            return Err(Fault::protocol(format!(
                "write of {} bytes at offset {offset} exceeds block size {}",
                data.len(),
                self.block_size
            )));
        }
        let mut inner = self.inner.write();
        match inner.state {
            DatanodeState::Active => {}
            DatanodeState::Draining(_) => {
                return Err(Fault::node_draining("writes are fenced during drain"))
            }
            DatanodeState::Terminated => {
                return Err(Fault::conflict("datanode is terminated"))
            }
        }
        if !inner.blocks.contains_key(&block) {
            if inner.blocks.len() as u32 >= self.capacity_blocks {
                return Err(Fault::capacity_exhausted(format!(
                    "store is at capacity ({} blocks)",
                    self.capacity_blocks
                )));
            }
            inner.blocks.insert(
                block,
                Block {
                    data: Vec::new(),
                    crc: crc32(&[]),
                },
            );
        }
        let entry = inner.blocks.get_mut(&block).expect("just ensured");
        if offset as usize > entry.data.len() {
            return Err(Fault::protocol(format!(
                "discontiguous write at offset {offset}, extent is {}",
                entry.data.len()
            )));
        }
        if end as usize > entry.data.len() {
            entry.data.resize(end as usize, 0);
        }
        entry.data[offset as usize..end as usize].copy_from_slice(data);
        entry.crc = if offset == 0 && end as usize == entry.data.len() {
            crc
        } else {
            crc32(&entry.data)
        };
        Ok(())
    }

    /// Copies out `len` bytes at `offset` with the CRC of the returned range.
    /// Served in Active and Draining states alike.
    pub fn read_block(
        &self,
        block: BlockId,
        offset: u32,
        len: u32,
    ) -> Result<(Vec<u8>, u32), Fault> {
        let inner = self.inner.read();
        if inner.state.is_terminated() {
            return Err(Fault::conflict("datanode is terminated"));
        }
        let entry = inner
            .blocks
            .get(&block)
            .ok_or_else(|| Fault::not_found(format!("block {block} not stored here")))?;
        let end = offset as u64 + len as u64;
        if end > entry.data.len() as u64 {
            return Err(Fault::protocol(format!(
                "read of {len} bytes at {offset} exceeds written extent {}",
                entry.data.len()
            )));
        }
        let range = entry.data[offset as usize..end as usize].to_vec();
        let crc = if offset == 0 && end as usize == entry.data.len() {
            entry.crc
        } else {
            crc32(&range)
        };
        Ok((range, crc))
    }

    /// Removes a block. Idempotent: deleting an absent block is an ack.
    pub fn delete_block(&self, block: BlockId) {
        self.inner.write().blocks.remove(&block);
    }

    pub fn enter_draining(&self, deadline: Timestamp) -> Result<(), Fault> {
        let mut inner = self.inner.write();
        match inner.state {
            DatanodeState::Active => {
                inner.state = DatanodeState::Draining(deadline);
                Ok(())
            }
            _ => Err(Fault::conflict("datanode is not active")),
        }
    }

    /// Drops every block and refuses further service. Idempotent.
    pub fn terminate(&self) {
        let mut inner = self.inner.write();
        inner.blocks.clear();
        inner.state = DatanodeState::Terminated;
    }

    /// Order-independent digest of the full store contents; used to verify
    /// that a write barrage during drain left the store untouched.
    pub fn digest(&self) -> u64 {
        let inner = self.inner.read();
        let mut ids: Vec<BlockId> = inner.blocks.keys().copied().collect();
        ids.sort();
        let mut acc = 0u32;
        for id in ids {
            let b = &inner.blocks[&id];
            acc = crc32_update(acc, &id.0.to_be_bytes());
            acc = crc32_update(acc, &(b.data.len() as u64).to_be_bytes());
            acc = crc32_update(acc, &b.crc.to_be_bytes());
        }
        ((inner.blocks.len() as u64) << 32) | acc as u64
    }
}
