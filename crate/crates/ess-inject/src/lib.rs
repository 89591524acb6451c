//! Preemption injector: draws spot-instance lifetimes from parametric models
//! or trace files and drives the cluster lifecycle at the drawn times:
//! notices to the relocator, drain fencing and termination to datanodes, and
//! replacement registration after a respawn delay.

pub mod model;
pub mod runner;
pub mod stats;
pub mod wire;

pub use model::{preset, sample_lifetimes, LifetimeModel, LifetimeSampler, PreemptionModelParams};
pub use runner::{events_to_jsonl, run_schedule, EventKind, EventRecord, Fleet};
pub use stats::{empirical_cdf, ks_critical, ks_passes, ks_statistic, write_cdf_csv};
pub use wire::{ClusterConfig, SlotConfig, WireFleet};
