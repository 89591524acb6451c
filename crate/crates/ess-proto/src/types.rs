//! Domain types shared by the namenode, datanodes, relocator and client.

use std::fmt;

use crate::clock::Timestamp;
use crate::error::Fault;

/// Maximum encoded length of an object name in bytes.
pub const MAX_OBJECT_NAME_BYTES: usize = 4096;

/// A validated object name: `/`-separated path segments, UTF-8, at most
/// [`MAX_OBJECT_NAME_BYTES`] bytes. Segments must be non-empty and must not
/// be `.` or `..`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectName(String);

impl ObjectName {
    pub fn new(name: impl Into<String>) -> Result<ObjectName, Fault> {
        let name = name.into();
        if name.is_empty() {
            return Err(Fault::protocol("object name must be non-empty"));
        }
        if name.len() > MAX_OBJECT_NAME_BYTES {
            return Err(Fault::protocol(format!(
                "object name exceeds {} bytes",
                MAX_OBJECT_NAME_BYTES
            )));
        }
        for segment in name.split('/') {
            if segment.is_empty() {
                return Err(Fault::protocol("object name has an empty path segment"));
            }
            if segment == "." || segment == ".." {
                return Err(Fault::protocol("object name segments `.` and `..` are reserved"));
            }
        }
        Ok(ObjectName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ObjectName {
    type Err = Fault;

    fn from_str(s: &str) -> Result<ObjectName, Fault> {
        ObjectName::new(s)
    }
}

/// Namenode-issued block identifier. Monotonically increasing, never reused,
/// even after deletion or loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Datanode identifier assigned at registration; unique within one namenode
/// lifetime. A respawned node gets a fresh id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatanodeId(pub u32);

impl fmt::Display for DatanodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dn{}", self.0)
    }
}

/// Where a block's bytes currently live. `Lost` is terminal: a block never
/// returns from `Lost` to a located state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockLocation {
    Node(DatanodeId),
    Lost,
}

impl BlockLocation {
    pub fn node(&self) -> Option<DatanodeId> {
        match self {
            BlockLocation::Node(id) => Some(*id),
            BlockLocation::Lost => None,
        }
    }

    pub fn is_lost(&self) -> bool {
        matches!(self, BlockLocation::Lost)
    }
}

/// One block of an object: identity, current location, payload length, the
/// block's ordinal within its object, and the location version used as the
/// compare-and-set token for relocation commits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDescriptor {
    pub id: BlockId,
    pub location: BlockLocation,
    /// Bytes stored in this block; every block except the last one of an
    /// object is exactly the cluster block size.
    pub length: u32,
    /// Ordinal of this block within its object (0-based, gapless).
    pub index: u32,
    /// Bumped on every location change; `Lost` is the final bump.
    pub version: u64,
}

/// Object metadata as served by the namenode: the unit of client lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMetadata {
    pub name: ObjectName,
    /// Total object size; always the sum of block lengths.
    pub size: u64,
    /// Strictly increases on every mutation of the block list, including
    /// relocation commits and loss markings.
    pub version: u64,
    /// Ordered by `index`.
    pub blocks: Vec<BlockDescriptor>,
}

impl ObjectMetadata {
    /// True if any block of the object is lost.
    pub fn has_lost_blocks(&self) -> bool {
        self.blocks.iter().any(|b| b.location.is_lost())
    }
}

/// Datanode lifecycle. Transitions only ever move forward:
/// Active -> Draining -> Terminated, or Active -> Terminated directly for
/// zero-warning preemptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatanodeState {
    Active,
    /// Draining until the given deadline on the owning service's clock.
    Draining(Timestamp),
    Terminated,
}

impl DatanodeState {
    pub fn is_active(&self) -> bool {
        matches!(self, DatanodeState::Active)
    }

    pub fn is_draining(&self) -> bool {
        matches!(self, DatanodeState::Draining(_))
    }

    pub fn is_terminated(&self) -> bool {
        matches!(self, DatanodeState::Terminated)
    }
}

/// A datanode's identity and dialable address, as handed out by the namenode
/// alongside metadata so that clients never need a separate directory lookup.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DatanodeRef {
    pub id: DatanodeId,
    pub address: String,
}

/// Splits an object of `size` bytes into block lengths of at most
/// `block_size`: all blocks are full-size except a shorter final one.
/// An empty object has no blocks.
pub fn split_into_blocks(size: u64, block_size: u32) -> Vec<u32> {
    assert!(block_size > 0, "block size must be positive");
    let mut lengths = Vec::new();
    let mut remaining = size;
    while remaining > 0 {
        let len = remaining.min(block_size as u64) as u32;
        lengths.push(len);
        remaining -= len as u64;
    }
    lengths
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_name_accepts_paths() {
        assert!(ObjectName::new("a").is_ok());
        assert!(ObjectName::new("shuffle/stage-3/part-00017").is_ok());
        assert!(ObjectName::new("a/b/c").is_ok());
    }

    #[test]
    fn object_name_rejects_invalid() {
        assert!(ObjectName::new("").is_err());
        assert!(ObjectName::new("/leading").is_err());
        assert!(ObjectName::new("trailing/").is_err());
        assert!(ObjectName::new("a//b").is_err());
        assert!(ObjectName::new("a/./b").is_err());
        assert!(ObjectName::new("../b").is_err());
        assert!(ObjectName::new("x".repeat(MAX_OBJECT_NAME_BYTES + 1)).is_err());
        assert!(ObjectName::new("x".repeat(MAX_OBJECT_NAME_BYTES)).is_ok());
    }

    #[test]
    fn block_split_arithmetic() {
        const MIB: u64 = 1024 * 1024;
        // 2.5 MiB with 1 MiB blocks -> 1 MiB, 1 MiB, 0.5 MiB
        let lengths = split_into_blocks(5 * MIB / 2, MIB as u32);
        assert_eq!(lengths, vec![MIB as u32, MIB as u32, (MIB / 2) as u32]);
        assert_eq!(split_into_blocks(0, MIB as u32), Vec::<u32>::new());
        assert_eq!(split_into_blocks(1, MIB as u32), vec![1]);
        assert_eq!(split_into_blocks(MIB, MIB as u32), vec![MIB as u32]);
    }

    #[test]
    fn datanode_state_predicates() {
        assert!(DatanodeState::Active.is_active());
        assert!(DatanodeState::Draining(Timestamp::from_nanos(5)).is_draining());
        assert!(DatanodeState::Terminated.is_terminated());
    }
}
