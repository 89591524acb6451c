//! Shared foundation for the ess ephemeral datastore: domain types, error
//! codes, the framed binary wire protocol spoken by every service, and the
//! clock abstraction that lets timing-sensitive logic run against either the
//! system clock or a deterministic virtual clock in tests.

pub mod clock;
pub mod crc;
pub mod error;
pub mod message;
pub mod net;
pub mod types;
pub mod units;
pub mod wire;

pub use error::{Error, ErrorCode, Fault, Result};
pub use message::Message;
pub use types::{
    BlockDescriptor, BlockId, BlockLocation, DatanodeId, DatanodeRef, DatanodeState,
    ObjectMetadata, ObjectName,
};

/// Default block size: objects are split into fixed-size blocks of this many
/// bytes (the last block of an object may be shorter).
pub const DEFAULT_BLOCK_SIZE: u32 = 1024 * 1024;

/// Protocol version carried in Register; bumped on incompatible changes.
pub const PROTOCOL_VERSION: u8 = 1;
