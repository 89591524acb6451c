//! Read-only / write-only / mixed workload drivers over the client library,
//! with per-second metrics sampling.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use ess_client::Client;
use ess_proto::clock::Clock;
use ess_proto::{Error, ErrorCode, Fault, ObjectName, Result};
use parking_lot::Mutex;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::MetricsSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    ReadOnly,
    WriteOnly,
    Mixed { write_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataLifetime {
    /// Objects persist for the whole run (the read-only dataset).
    LongLived,
    /// Written objects are retired after `delete_after` further operations:
    /// reads against them in mixed workloads, subsequent writes in
    /// write-only ones.
    ShortLived { delete_after: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub object_size_bytes: u64,
    /// Dataset size for read paths; the preloaded objects are `ro/<i>`.
    pub object_count: u32,
    pub threads: u32,
    pub duration_s: f64,
    pub lifetime: DataLifetime,
    /// Stop after this many operations even if time remains: fixed-work mode
    /// for runtime-inflation comparisons.
    #[serde(default)]
    pub op_budget: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.threads < 1 {
            return Err(Fault::protocol("threads must be at least 1").into());
        }
        if let WorkloadKind::Mixed { write_fraction } = self.kind {
            if !(0.0..=1.0).contains(&write_fraction) {
                return Err(Fault::protocol("write_fraction must be in [0,1]").into());
            }
        }
        if self.duration_s <= 0.0 {
            return Err(Fault::protocol("duration must be positive").into());
        }
        if self.reads_dataset() && self.object_count == 0 {
            return Err(Fault::protocol("read paths need object_count >= 1").into());
        }
        Ok(())
    }

    pub fn duration(&self) -> Duration {
        Duration::from_secs_f64(self.duration_s)
    }

    fn reads_dataset(&self) -> bool {
        !matches!(self.kind, WorkloadKind::WriteOnly)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct WorkloadSummary {
    pub runtime_secs: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub ops_ok: u64,
    pub ops_failed: u64,
    pub ops_retried: u64,
    pub ops_data_unavailable: u64,
    pub read_mb_s: f64,
    pub write_mb_s: f64,
}

#[derive(Debug, Clone)]
pub struct WorkloadOutcome {
    pub samples: Vec<MetricsSample>,
    pub summary: WorkloadSummary,
}

/// Name of the i-th preloaded dataset object.
pub fn dataset_object(i: u32) -> ObjectName {
    ObjectName::new(format!("ro/{i}")).expect("valid dataset name")
}

/// Deterministic content for an object: the read path verifies against this.
pub fn object_payload(index: u64, size: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(size as usize);
    let mut state = index.wrapping_mul(0x9E3779B97F4A7C15) ^ 0xD1B54A32D192ED03;
    while out.len() < size as usize {
        // splitmix64 step
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        let bytes = z.to_le_bytes();
        let take = bytes.len().min(size as usize - out.len());
        out.extend_from_slice(&bytes[..take]);
    }
    out
}

/// Writes the `ro/<i>` dataset used by read paths.
pub fn preload(client: &Client, spec: &WorkloadSpec) -> Result<()> {
    for i in 0..spec.object_count {
        let name = dataset_object(i);
        match client.put_object(&name, &object_payload(i as u64, spec.object_size_bytes)) {
            Ok(_) => {}
            Err(e) if e.is_code(ErrorCode::AlreadyExists) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

#[derive(Default)]
struct OpCounters {
    ok: AtomicU64,
    failed: AtomicU64,
    data_unavailable: AtomicU64,
}

/// A written object still eligible for reads in mixed workloads.
struct LiveObject {
    name: ObjectName,
    reads_left: Option<u32>,
}

/// Drives the workload for its configured duration and samples metrics once
/// per second. The read path verifies content against the deterministic
/// payload, so corruption counts as failure, not success.
pub fn run_workload(
    client: &Client,
    spec: &WorkloadSpec,
    clock: &dyn Clock,
) -> Result<WorkloadOutcome> {
    spec.validate()?;

    // Fail fast when the namenode is down or the dataset is missing.
    if spec.reads_dataset() {
        match client.lookup_fresh(&dataset_object(0)) {
            Ok(_) => {}
            Err(e) if e.is_code(ErrorCode::NotFound) => {
                return Err(Fault::protocol(
                    "read workload needs a preloaded dataset (nothing to read)",
                )
                .into());
            }
            Err(e) => return Err(e),
        }
    } else if let Err(e @ Error::Io(_)) = client.lookup_fresh(&dataset_object(0)) {
        return Err(e);
    }

    let live: Mutex<Vec<LiveObject>> = Mutex::new(
        if spec.reads_dataset() {
            (0..spec.object_count)
                .map(|i| LiveObject {
                    name: dataset_object(i),
                    reads_left: match spec.lifetime {
                        DataLifetime::LongLived => None,
                        DataLifetime::ShortLived { delete_after } => Some(delete_after.max(1)),
                    },
                })
                .collect()
        } else {
            Vec::new()
        },
    );
    let counters = OpCounters::default();
    let write_seq = AtomicU64::new(0);
    let started_ops = AtomicU64::new(0);
    let live_workers = AtomicU64::new(spec.threads as u64);
    let stop_sampler = std::sync::atomic::AtomicBool::new(false);
    let work_end_nanos = AtomicU64::new(0);

    let metrics = client.metrics();
    let base = metrics.snapshot();
    let start = clock.now();
    let end = start + spec.duration();
    let budget = spec.op_budget.unwrap_or(u64::MAX);

    let samples: Mutex<Vec<MetricsSample>> = Mutex::new(Vec::new());
    let workers = spec.threads;
    std::thread::scope(|s| {
        // Sampler: one roll-up per second, polling in short slices so the
        // run does not drag past the last worker.
        s.spawn(|| {
            let mut prev = base;
            let mut prev_ops = 0u64;
            let mut prev_du = 0u64;
            let mut t = 0u64;
            loop {
                let done = stop_sampler.load(Ordering::Relaxed);
                if !done {
                    let next_tick = start + Duration::from_secs(t + 1);
                    if clock.now() < next_tick {
                        clock.sleep(Duration::from_millis(100));
                        continue;
                    }
                }
                let snap = metrics.snapshot();
                let ops = counters.ok.load(Ordering::Relaxed);
                let du = counters.data_unavailable.load(Ordering::Relaxed);
                samples.lock().push(MetricsSample {
                    t_secs: t,
                    bytes_read: snap.bytes_read - prev.bytes_read,
                    bytes_written: snap.bytes_written - prev.bytes_written,
                    ops_ok: ops - prev_ops,
                    ops_retried: (snap.stale_retries + snap.write_fenced)
                        - (prev.stale_retries + prev.write_fenced),
                    ops_data_unavailable: du - prev_du,
                });
                prev = snap;
                prev_ops = ops;
                prev_du = du;
                t += 1;
                if done {
                    return;
                }
            }
        });

        for worker in 0..workers {
            let live = &live;
            let counters = &counters;
            let write_seq = &write_seq;
            let started_ops = &started_ops;
            let live_workers = &live_workers;
            let stop_sampler = &stop_sampler;
            let work_end_nanos = &work_end_nanos;
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ ((worker as u64) << 32));
            s.spawn(move || {
                while clock.now() < end
                    && started_ops.fetch_add(1, Ordering::Relaxed) < budget
                {
                    let wrote = match spec.kind {
                        WorkloadKind::ReadOnly => false,
                        WorkloadKind::WriteOnly => true,
                        WorkloadKind::Mixed { write_fraction } => rng.gen_bool(write_fraction),
                    };
                    let outcome = if wrote {
                        write_op(client, spec, write_seq, live, worker)
                    } else {
                        read_op(client, spec, &mut rng, live)
                    };
                    match outcome {
                        Ok(()) => {
                            counters.ok.fetch_add(1, Ordering::Relaxed);
                        }
                        Err(e) if e.is_code(ErrorCode::DataUnavailable) => {
                            counters.data_unavailable.fetch_add(1, Ordering::Relaxed);
                        }
                        Err(_) => {
                            counters.failed.fetch_add(1, Ordering::Relaxed);
                            // Back off instead of hammering a failing cluster.
                            clock.sleep(Duration::from_millis(50));
                        }
                    }
                }
                work_end_nanos.fetch_max(clock.now().as_nanos(), Ordering::Relaxed);
                if live_workers.fetch_sub(1, Ordering::Relaxed) == 1 {
                    stop_sampler.store(true, Ordering::Relaxed);
                }
            });
        }
    });

    let runtime_secs = Duration::from_nanos(
        work_end_nanos
            .load(Ordering::Relaxed)
            .saturating_sub(start.as_nanos()),
    )
    .as_secs_f64()
    .max(f64::EPSILON);
    let snap = metrics.snapshot();
    let summary = WorkloadSummary {
        runtime_secs,
        bytes_read: snap.bytes_read - base.bytes_read,
        bytes_written: snap.bytes_written - base.bytes_written,
        ops_ok: counters.ok.load(Ordering::Relaxed),
        ops_failed: counters.failed.load(Ordering::Relaxed),
        ops_retried: (snap.stale_retries + snap.write_fenced)
            - (base.stale_retries + base.write_fenced),
        ops_data_unavailable: counters.data_unavailable.load(Ordering::Relaxed),
        read_mb_s: (snap.bytes_read - base.bytes_read) as f64 / 1e6 / runtime_secs,
        write_mb_s: (snap.bytes_written - base.bytes_written) as f64 / 1e6 / runtime_secs,
    };
    Ok(WorkloadOutcome {
        samples: samples.into_inner(),
        summary,
    })
}

fn read_op(
    client: &Client,
    spec: &WorkloadSpec,
    rng: &mut ChaCha12Rng,
    live: &Mutex<Vec<LiveObject>>,
) -> Result<()> {
    // Pick a live object; retire it when its read quota runs out.
    let (name, expect_index, retire) = {
        let mut live = live.lock();
        if live.is_empty() {
            return Err(Fault::not_found("no live objects to read").into());
        }
        let idx = rng.gen_range(0..live.len());
        let entry = &mut live[idx];
        let retire = match &mut entry.reads_left {
            Some(left) => {
                *left -= 1;
                *left == 0
            }
            None => false,
        };
        let name = entry.name.clone();
        let expect = dataset_index(&name);
        if retire {
            live.swap_remove(idx);
        }
        (name, expect, retire)
    };
    let data = client.get_object(&name)?;
    if let Some(index) = expect_index {
        if data != object_payload(index, spec.object_size_bytes) {
            return Err(Fault::protocol(format!("content mismatch reading {name}")).into());
        }
    }
    if retire {
        match client.delete_object(&name) {
            Ok(()) => {}
            Err(e) if e.is_code(ErrorCode::NotFound) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn write_op(
    client: &Client,
    spec: &WorkloadSpec,
    write_seq: &AtomicU64,
    live: &Mutex<Vec<LiveObject>>,
    worker: u32,
) -> Result<()> {
    let seq = write_seq.fetch_add(1, Ordering::Relaxed);
    let name = ObjectName::new(format!("w/{worker}/{seq}")).expect("valid name");
    let payload_index = u64::from(u32::MAX) + seq;
    client.put_object(&name, &object_payload(payload_index, spec.object_size_bytes))?;
    match (spec.kind, spec.lifetime) {
        (WorkloadKind::Mixed { .. }, lifetime) => {
            live.lock().push(LiveObject {
                name,
                reads_left: match lifetime {
                    DataLifetime::LongLived => None,
                    DataLifetime::ShortLived { delete_after } => Some(delete_after.max(1)),
                },
            });
        }
        (WorkloadKind::WriteOnly, DataLifetime::ShortLived { delete_after }) => {
            // Written data is consumed within `delete_after` further writes:
            // retire the backlog beyond that window.
            let mut live = live.lock();
            live.push(LiveObject {
                name,
                reads_left: None,
            });
            while live.len() > delete_after.max(1) as usize {
                let victim = live.remove(0);
                match client.delete_object(&victim.name) {
                    Ok(()) => {}
                    Err(e) if e.is_code(ErrorCode::NotFound) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        (WorkloadKind::WriteOnly, DataLifetime::LongLived) => {}
        (WorkloadKind::ReadOnly, _) => unreachable!("read-only workloads never write"),
    }
    Ok(())
}

/// Dataset objects are verifiable against their deterministic payload;
/// workload-written objects in mixed mode are not re-verified (their payload
/// index is not recoverable from the name alone).
fn dataset_index(name: &ObjectName) -> Option<u64> {
    name.as_str().strip_prefix("ro/").and_then(|s| s.parse().ok())
}
