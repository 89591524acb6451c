//! In-memory block storage service: read/write/delete with CRC integrity, a
//! drain mode that fences writes while reads keep flowing, configurable
//! egress/ingress throttling, and hard termination.

pub mod server;
pub mod store;
pub mod throttle;

pub use server::{control_allowed, spawn, DatanodeConfig, DatanodeHandle};
pub use store::BlockStore;
pub use throttle::{Throttle, TokenBucket};
