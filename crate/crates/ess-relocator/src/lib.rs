//! Drain protocol driver: on a preemption notice, fences the victim node,
//! enumerates its blocks, and migrates as many as possible before the
//! termination deadline via read, place, write, commit.

mod drive;
pub mod schedule;
pub mod server;

pub use drive::{Relocator, RelocatorConfig};
pub use schedule::{schedule, TaskRunner};
pub use server::{spawn, RelocatorServiceHandle};

use ess_proto::clock::Timestamp;
use ess_proto::{BlockDescriptor, DatanodeId, ObjectName};
use serde::Serialize;

/// One block to move off a draining node. `source` is the committed location
/// at snapshot time.
#[derive(Debug, Clone)]
pub struct RelocationTask {
    pub object: ObjectName,
    pub block: BlockDescriptor,
    pub source: DatanodeId,
    pub attempt: u32,
}

/// Why a block could not be moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum LossReason {
    /// The deadline passed before or during the transfer.
    DeadlineExceeded,
    /// No active node had room for the block.
    CapacityExhausted,
    /// The source stopped answering before the block was read.
    SourceUnavailable,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskOutcome {
    Moved { bytes: u64 },
    Lost(LossReason),
    /// The block was deleted (or replaced) while the drain ran.
    Skipped,
}

/// Outcome summary of one drain.
#[derive(Debug, Clone, Serialize)]
pub struct RelocationReport {
    pub node: u32,
    pub blocks_total: u64,
    pub blocks_moved: u64,
    pub blocks_lost: u64,
    pub blocks_skipped: u64,
    pub bytes_moved: u64,
    pub elapsed_secs: f64,
    /// True when every task settled before the deadline.
    pub deadline_met: bool,
}

impl RelocationReport {
    fn from_outcomes(
        node: DatanodeId,
        outcomes: &[(RelocationTask, TaskOutcome)],
        elapsed_secs: f64,
        deadline_met: bool,
    ) -> RelocationReport {
        let mut report = RelocationReport {
            node: node.0,
            blocks_total: outcomes.len() as u64,
            blocks_moved: 0,
            blocks_lost: 0,
            blocks_skipped: 0,
            bytes_moved: 0,
            elapsed_secs,
            deadline_met,
        };
        for (_, outcome) in outcomes {
            match outcome {
                TaskOutcome::Moved { bytes } => {
                    report.blocks_moved += 1;
                    report.bytes_moved += bytes;
                }
                TaskOutcome::Lost(_) => report.blocks_lost += 1,
                TaskOutcome::Skipped => report.blocks_skipped += 1,
            }
        }
        report
    }
}

/// Deadline for a drain on the local clock.
pub(crate) fn local_deadline(now: Timestamp, deadline_in_ms: u64) -> Timestamp {
    now + std::time::Duration::from_millis(deadline_in_ms)
}
