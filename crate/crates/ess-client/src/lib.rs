//! Client library for the ess ephemeral datastore: object put/get/delete
//! over fixed-size blocks, metadata caching with stale-location
//! invalidation and retry, drain-aware write re-placement, and a recompute
//! hook that regenerates data the store reports as unavailable.

pub mod cache;
mod client;

pub use cache::MetadataCache;
pub use client::{Client, ClientConfig, ClientMetrics, MetricsSnapshot, RetryPolicy};
