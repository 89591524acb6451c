//! Workload driver tests against an in-process cluster.

use std::time::Duration;

use ess_bench::{preload, run_workload, DataLifetime, WorkloadKind, WorkloadSpec};
use ess_harness::{Cluster, ClusterSpec};

fn spec(kind: WorkloadKind, lifetime: DataLifetime) -> WorkloadSpec {
    WorkloadSpec {
        kind,
        object_size_bytes: 128 * 1024,
        object_count: 8,
        threads: 4,
        duration_s: 2.0,
        lifetime,
        op_budget: None,
        seed: 5,
    }
}

#[test]
fn read_only_reports_throughput_and_zero_failures() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let spec = spec(WorkloadKind::ReadOnly, DataLifetime::LongLived);
    preload(&client, &spec).unwrap();

    let outcome = run_workload(&client, &spec, cluster.clock().as_ref()).unwrap();
    assert!(outcome.summary.ops_ok > 0);
    assert_eq!(outcome.summary.ops_failed, 0);
    assert_eq!(outcome.summary.ops_data_unavailable, 0);
    assert_eq!(outcome.summary.bytes_written, 0);
    assert!(outcome.summary.bytes_read >= outcome.summary.ops_ok * 128 * 1024);
    assert!(!outcome.samples.is_empty());
    // Aggregate bandwidth is consistent with the totals.
    let implied = outcome.summary.bytes_read as f64 / 1e6 / outcome.summary.runtime_secs;
    assert!((implied - outcome.summary.read_mb_s).abs() < 1e-6);
}

#[test]
fn read_only_on_empty_store_errors_immediately() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let spec = spec(WorkloadKind::ReadOnly, DataLifetime::LongLived);
    let err = run_workload(&client, &spec, cluster.clock().as_ref()).unwrap_err();
    assert!(err.to_string().contains("nothing to read"), "{err}");
}

#[test]
fn mixed_with_zero_write_fraction_matches_read_only_mix() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let ro = spec(WorkloadKind::ReadOnly, DataLifetime::LongLived);
    preload(&client, &ro).unwrap();

    let mixed = spec(
        WorkloadKind::Mixed { write_fraction: 0.0 },
        DataLifetime::LongLived,
    );
    let out_mixed = run_workload(&client, &mixed, cluster.clock().as_ref()).unwrap();
    let out_ro = run_workload(&client, &ro, cluster.clock().as_ref()).unwrap();
    // Identical op mix: reads only, no writes in either run.
    assert_eq!(out_mixed.summary.bytes_written, 0);
    assert_eq!(out_ro.summary.bytes_written, 0);
    assert!(out_mixed.summary.ops_ok > 0);
    assert_eq!(out_mixed.summary.ops_failed, 0);
}

#[test]
fn write_only_short_lived_bounds_live_objects() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let spec = spec(
        WorkloadKind::WriteOnly,
        DataLifetime::ShortLived { delete_after: 6 },
    );
    let outcome = run_workload(&client, &spec, cluster.clock().as_ref()).unwrap();
    assert!(outcome.summary.ops_ok > 10);
    assert_eq!(outcome.summary.bytes_read, 0);
    // The retirement window keeps the namespace bounded: at most the window
    // plus whatever was in flight when the run stopped.
    let live = cluster.nn.with_state(|ms| ms.object_count());
    assert!(
        live <= 6 + spec.threads as usize,
        "{live} live objects outlived the window"
    );
}

#[test]
fn mixed_short_lived_retires_objects_after_read_quota() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let spec = WorkloadSpec {
        kind: WorkloadKind::Mixed { write_fraction: 0.3 },
        object_size_bytes: 32 * 1024,
        object_count: 6,
        threads: 4,
        duration_s: 2.0,
        lifetime: DataLifetime::ShortLived { delete_after: 2 },
        op_budget: None,
        seed: 9,
    };
    preload(&client, &spec).unwrap();
    let outcome = run_workload(&client, &spec, cluster.clock().as_ref()).unwrap();
    assert!(outcome.summary.ops_ok > 0);
    assert!(outcome.summary.bytes_written > 0);
    assert!(outcome.summary.bytes_read > 0);
}

#[test]
fn op_budget_stops_early() {
    let cluster = Cluster::start(ClusterSpec::default());
    let client = cluster.client();
    let mut spec = spec(WorkloadKind::WriteOnly, DataLifetime::LongLived);
    spec.duration_s = 30.0;
    spec.op_budget = Some(20);
    let start = std::time::Instant::now();
    let outcome = run_workload(&client, &spec, cluster.clock().as_ref()).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10));
    let attempted = outcome.summary.ops_ok + outcome.summary.ops_failed
        + outcome.summary.ops_data_unavailable;
    assert_eq!(attempted, 20);
}
