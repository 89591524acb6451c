//! Datanode capacity sizing: how long a full-memory drain takes at the
//! instance's egress cap, and the largest memory that fits a notice window.

use std::time::Duration;

use ess_proto::Fault;
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct SizingInput {
    pub memory_capacity_bytes: u64,
    pub egress_bits_per_sec: u64,
    pub notice_period: Duration,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SizingOutput {
    pub drain_seconds: f64,
    pub feasible: bool,
    pub max_capacity_bytes: u64,
}

/// Seconds to push the whole memory through the egress link.
pub fn sizing_time(input: &SizingInput) -> Result<f64, Fault> {
    if input.egress_bits_per_sec == 0 {
        return Err(Fault::protocol("egress bandwidth must be positive"));
    }
    Ok(input.memory_capacity_bytes as f64 * 8.0 / input.egress_bits_per_sec as f64)
}

/// A node is drainable when the full-memory transfer fits into the notice
/// window.
pub fn sizing_feasible(input: &SizingInput) -> Result<bool, Fault> {
    Ok(sizing_time(input)? <= input.notice_period.as_secs_f64())
}

/// Largest memory fully drainable within `notice` at `egress_bits_per_sec`.
pub fn max_capacity_bytes(egress_bits_per_sec: u64, notice: Duration) -> u64 {
    (egress_bits_per_sec as f64 * notice.as_secs_f64() / 8.0) as u64
}

pub fn evaluate(input: &SizingInput) -> Result<SizingOutput, Fault> {
    Ok(SizingOutput {
        drain_seconds: sizing_time(input)?,
        feasible: sizing_feasible(input)?,
        max_capacity_bytes: max_capacity_bytes(input.egress_bits_per_sec, input.notice_period),
    })
}
