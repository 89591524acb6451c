//! Metadata service: namespace, block-to-datanode map, datanode registry and
//! lifecycle, block allocation, relocation commits and lost-block
//! bookkeeping. Single instance, in-memory state; runs on an on-demand VM in
//! the deployments this models, so no persistence or failover.

mod config;
pub mod server;
pub mod state;

pub use config::NamenodeFileConfig;
pub use server::{spawn, NamenodeHandle};
pub use state::{MetaStore, NamenodeConfig, NodeRecord, PlacementPolicy};
