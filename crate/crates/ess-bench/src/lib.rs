//! Benchmark and analysis toolkit: workload drivers over the client library,
//! per-second bandwidth series, the deployment cost model, and the datanode
//! capacity sizing calculator.

pub mod cost;
pub mod metrics;
pub mod report;
pub mod sizing;
pub mod workload;

pub use cost::{cost_model, CostBreakdown, CostInputs};
pub use metrics::{
    analyze_dip, bandwidth_timeseries_csv, coefficient_of_variation, DipAnalysis, MetricsSample,
};
pub use report::{ClusterInfo, RunReport};
pub use sizing::{evaluate, max_capacity_bytes, sizing_feasible, sizing_time, SizingInput};
pub use workload::{
    dataset_object, object_payload, preload, run_workload, DataLifetime, WorkloadKind,
    WorkloadOutcome, WorkloadSpec, WorkloadSummary,
};
