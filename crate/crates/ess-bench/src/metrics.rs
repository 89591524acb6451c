//! Per-second metrics sampling, bandwidth time-series export, and the shape
//! analysis used on drain windows.

use serde::Serialize;

/// One sampling window's worth of counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricsSample {
    /// Seconds since the run started.
    pub t_secs: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub ops_ok: u64,
    pub ops_retried: u64,
    pub ops_data_unavailable: u64,
}

impl MetricsSample {
    pub fn bandwidth_mb_s(&self) -> f64 {
        (self.bytes_read + self.bytes_written) as f64 / 1e6
    }
}

/// CSV export of the per-second series, one row per sample.
pub fn bandwidth_timeseries_csv(samples: &[MetricsSample]) -> String {
    let mut out = String::from(
        "t_seconds,read_mb_s,write_mb_s,ops_ok,ops_retried,ops_data_unavailable\n",
    );
    for s in samples {
        out.push_str(&format!(
            "{},{:.3},{:.3},{},{},{}\n",
            s.t_secs,
            s.bytes_read as f64 / 1e6,
            s.bytes_written as f64 / 1e6,
            s.ops_ok,
            s.ops_retried,
            s.ops_data_unavailable
        ));
    }
    out
}

/// Bandwidth shape around a drain: the plateau before the notice, the lowest
/// point inside the drain window, and the plateau after termination.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DipAnalysis {
    pub pre_mean_mb_s: f64,
    pub dip_min_mb_s: f64,
    pub post_mean_mb_s: f64,
}

pub fn analyze_dip(
    samples: &[MetricsSample],
    notice_t_secs: u64,
    terminate_t_secs: u64,
) -> DipAnalysis {
    let mean = |lo: u64, hi: u64| {
        let window: Vec<f64> = samples
            .iter()
            .filter(|s| s.t_secs >= lo && s.t_secs < hi)
            .map(|s| s.bandwidth_mb_s())
            .collect();
        if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        }
    };
    // Skip the first ramp-up second; skip one settling second after the
    // termination.
    let pre_mean_mb_s = mean(1, notice_t_secs);
    let dip_min_mb_s = samples
        .iter()
        .filter(|s| s.t_secs >= notice_t_secs && s.t_secs <= terminate_t_secs)
        .map(|s| s.bandwidth_mb_s())
        .fold(f64::INFINITY, f64::min);
    let end = samples.last().map(|s| s.t_secs + 1).unwrap_or(0);
    let post_mean_mb_s = mean(terminate_t_secs + 2, end);
    DipAnalysis {
        pre_mean_mb_s,
        dip_min_mb_s: if dip_min_mb_s.is_finite() { dip_min_mb_s } else { 0.0 },
        post_mean_mb_s,
    }
}

/// Population coefficient of variation of per-node block counts; zero for an
/// empty or all-zero set.
pub fn coefficient_of_variation(counts: &[u32]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|c| *c as f64).sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = counts
        .iter()
        .map(|c| {
            let d = *c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt() / mean
}
