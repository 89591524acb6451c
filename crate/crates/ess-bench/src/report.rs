//! Machine-readable run reports: everything needed to reproduce and compare
//! runs, as JSON plus a CSV sample series.

use serde::Serialize;

use crate::metrics::{bandwidth_timeseries_csv, MetricsSample};
use crate::workload::{WorkloadSpec, WorkloadSummary};

/// Cluster description embedded in reports.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterInfo {
    pub namenode: String,
    pub datanode_slots: usize,
    pub block_size_bytes: u32,
    pub egress_limit_bytes_per_sec: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub spec: WorkloadSpec,
    pub seed: u64,
    pub cluster: ClusterInfo,
    pub summary: WorkloadSummary,
    pub samples: Vec<MetricsSample>,
    /// Path of the injector event log that ran alongside, if any.
    pub events_log: Option<String>,
    /// Host wall-clock time the report was written; excluded from
    /// reproducibility comparisons.
    pub generated_unix_ms: u64,
}

impl RunReport {
    pub fn new(
        spec: WorkloadSpec,
        cluster: ClusterInfo,
        summary: WorkloadSummary,
        samples: Vec<MetricsSample>,
        events_log: Option<String>,
    ) -> RunReport {
        let seed = spec.seed;
        RunReport {
            spec,
            seed,
            cluster,
            summary,
            samples,
            events_log,
            generated_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report minus host timestamps, for comparing runs.
    pub fn comparable(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value
            .as_object_mut()
            .expect("report is an object")
            .remove("generated_unix_ms");
        value
    }

    pub fn samples_csv(&self) -> String {
        bandwidth_timeseries_csv(&self.samples)
    }
}
