//! The drain itself: fence, snapshot, migrate, account.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ess_proto::clock::{Clock, Timestamp};
use ess_proto::crc::crc32;
use ess_proto::message::{AllocateRequest, BlockOnNode};
use ess_proto::net::{ConnPool, FramedStream};
use ess_proto::{
    BlockId, BlockLocation, DatanodeId, DatanodeRef, Error, ErrorCode, Fault, Message, Result,
};
use parking_lot::{Condvar, Mutex};

use crate::schedule::{schedule, TaskRunner};
use crate::{local_deadline, LossReason, RelocationReport, RelocationTask, TaskOutcome};

#[derive(Debug, Clone)]
pub struct RelocatorConfig {
    pub namenode: String,
    /// Concurrent block transfers per drain.
    pub parallelism: usize,
    /// Optional JSONL sink for drain reports (also printed to stdout).
    pub report_file: Option<PathBuf>,
}

impl RelocatorConfig {
    pub fn new(namenode: impl Into<String>) -> RelocatorConfig {
        RelocatorConfig {
            namenode: namenode.into(),
            parallelism: 4,
            report_file: None,
        }
    }
}

struct DrainCell {
    report: Mutex<Option<std::result::Result<RelocationReport, String>>>,
    cv: Condvar,
}

impl DrainCell {
    fn new() -> Arc<DrainCell> {
        Arc::new(DrainCell {
            report: Mutex::new(None),
            cv: Condvar::new(),
        })
    }

    fn publish(&self, result: std::result::Result<RelocationReport, String>) {
        *self.report.lock() = Some(result);
        self.cv.notify_all();
    }

    fn wait(&self) -> std::result::Result<RelocationReport, String> {
        let mut slot = self.report.lock();
        while slot.is_none() {
            self.cv.wait(&mut slot);
        }
        slot.clone().expect("just checked")
    }
}

/// Drives drains. One drain per node at a time; a duplicate notice joins the
/// drain already in flight and receives its report.
pub struct Relocator {
    cfg: RelocatorConfig,
    clock: Arc<dyn Clock>,
    pool: ConnPool,
    drains: Mutex<HashMap<DatanodeId, Arc<DrainCell>>>,
}

impl Relocator {
    pub fn new(cfg: RelocatorConfig, clock: Arc<dyn Clock>) -> Relocator {
        Relocator {
            cfg,
            clock,
            pool: ConnPool::new(16),
            drains: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &RelocatorConfig {
        &self.cfg
    }

    /// Reacts to a preemption notice for `node` with `deadline_in` left on
    /// the warning clock: fence, snapshot the block list, migrate until done
    /// or out of time, and account every block as moved, lost or skipped.
    pub fn handle_notice(
        &self,
        node: DatanodeId,
        deadline_in: Duration,
    ) -> Result<RelocationReport> {
        let (cell, owner) = {
            let mut drains = self.drains.lock();
            match drains.get(&node) {
                Some(cell) => (cell.clone(), false),
                None => {
                    let cell = DrainCell::new();
                    drains.insert(node, cell.clone());
                    (cell, true)
                }
            }
        };
        if !owner {
            // A drain for this node is already running (or ran): hand back
            // its report instead of double-draining.
            return cell
                .wait()
                .map_err(|msg| Fault::conflict(format!("earlier drain of {node} failed: {msg}")).into());
        }
        let result = self.run_drain(node, deadline_in);
        match &result {
            Ok(report) => cell.publish(Ok(report.clone())),
            Err(e) => {
                cell.publish(Err(e.to_string()));
                // A failed drain should not pin the node forever.
                self.drains.lock().remove(&node);
            }
        }
        result
    }

    fn run_drain(&self, node: DatanodeId, deadline_in: Duration) -> Result<RelocationReport> {
        let start = self.clock.now();
        let deadline = local_deadline(start, deadline_in.as_millis() as u64);
        let deadline_in_ms = deadline_in.as_millis() as u64;

        // Fence allocations at the namenode. Conflict means the fence is
        // already in force, which is fine.
        match self.pool.request(
            &self.cfg.namenode,
            &Message::BeginDrain {
                node,
                deadline_in_ms,
            },
        ) {
            Ok(Message::BeginDrainOk) => {}
            Ok(other) => return Err(unexpected(&other)),
            Err(e) if e.is_code(ErrorCode::Conflict) => {}
            Err(e) => return Err(e),
        }

        // One stable snapshot of the victim's blocks; allocation fencing
        // guarantees the list cannot grow from here on.
        let (source, entries) = match self
            .pool
            .request(&self.cfg.namenode, &Message::ListBlocksOnNode { node })?
        {
            Message::ListBlocksOnNodeOk { node, blocks } => (node, blocks),
            other => return Err(unexpected(&other)),
        };

        // Fence writes at the datanode itself. An unreachable or already
        // draining node leaves the outcome to the per-block transfers.
        match self.pool.request(
            &source.address,
            &Message::EnterDraining { deadline_in_ms },
        ) {
            Ok(Message::EnterDrainingOk) => {}
            Ok(other) => return Err(unexpected(&other)),
            Err(e) if e.is_code(ErrorCode::Conflict) => {}
            Err(Error::Io(e)) => {
                log::warn!("{node} unreachable for drain fencing: {e}");
            }
            Err(e) => return Err(e),
        }

        log::info!(
            "draining {node} at {}: {} blocks, {}ms window",
            source.address,
            entries.len(),
            deadline_in_ms
        );

        let tasks: Vec<RelocationTask> = entries
            .into_iter()
            .map(|BlockOnNode { object, block }| RelocationTask {
                object,
                block,
                source: node,
                attempt: 0,
            })
            .collect();

        let runner = DrainRunner {
            relocator: self,
            source: source.clone(),
        };
        let outcomes = schedule(
            tasks,
            deadline,
            self.cfg.parallelism,
            &runner,
            self.clock.as_ref(),
        );

        let end = self.clock.now();
        let deadline_met = end <= deadline;
        if !deadline_met {
            // The window closed while we were still working: finalize the
            // preemption ourselves (idempotent with the injector doing the
            // same at terminate time).
            match self
                .pool
                .request(&self.cfg.namenode, &Message::MarkLost { node })
            {
                Ok(Message::MarkLostOk { lost_blocks }) => {
                    log::warn!("{node} terminated at deadline, {lost_blocks} blocks lost")
                }
                Ok(_) | Err(_) => {}
            }
            if let Ok(mut conn) = FramedStream::connect(source.address.as_str()) {
                let _ = conn.send(&Message::Terminate);
            }
        }

        let report = RelocationReport::from_outcomes(
            node,
            &outcomes,
            end.since(start).as_secs_f64(),
            deadline_met,
        );
        self.emit_report(&report);
        Ok(report)
    }

    fn emit_report(&self, report: &RelocationReport) {
        let line = serde_json::to_string(report).expect("report serializes");
        {
            use std::io::Write as _;
            let _ = writeln!(std::io::stdout(), "{line}");
        }
        if let Some(path) = &self.cfg.report_file {
            let result = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = result {
                log::warn!("cannot append report to {}: {e}", path.display());
            }
        }
    }

    /// Migrates one block: read from the draining source, place and write a
    /// copy, then CAS-commit the new location. The source copy is left in
    /// place so reads keep working until the node dies.
    fn relocate_block(
        &self,
        task: &RelocationTask,
        source: &DatanodeRef,
        deadline: Timestamp,
    ) -> TaskOutcome {
        let block = task.block.id;
        if self.clock.now() >= deadline {
            return TaskOutcome::Lost(LossReason::DeadlineExceeded);
        }

        // Step 1: read the bytes from the old location.
        let read = self.pool.request(
            &source.address,
            &Message::ReadBlock {
                block,
                offset: 0,
                len: task.block.length,
            },
        );
        let (data, crc) = match read {
            Ok(Message::ReadBlockOk { crc, data }) => {
                if crc32(&data) != crc || data.len() != task.block.length as usize {
                    return TaskOutcome::Lost(LossReason::Other(format!(
                        "source returned corrupt bytes for {block}"
                    )));
                }
                (data, crc)
            }
            Ok(other) => return TaskOutcome::Lost(LossReason::Other(format!(
                "unexpected read response {:#04x}",
                other.type_byte()
            ))),
            Err(e) if e.is_code(ErrorCode::NotFound) => return TaskOutcome::Skipped,
            Err(Error::Io(_)) => return TaskOutcome::Lost(LossReason::SourceUnavailable),
            Err(e) => return TaskOutcome::Lost(LossReason::Other(e.to_string())),
        };

        // Steps 2 and 3, retrying against a different destination when one
        // fills up or starts draining under us.
        let mut exclude = vec![task.source];
        for _ in 0..3 {
            if self.clock.now() >= deadline {
                return TaskOutcome::Lost(LossReason::DeadlineExceeded);
            }
            let placement = self.pool.request(
                &self.cfg.namenode,
                &Message::AllocateBlock(AllocateRequest::Destination {
                    block,
                    exclude: exclude.clone(),
                }),
            );
            let (proposal, target) = match placement {
                Ok(Message::AllocateBlockOk { block, target }) => (block, target),
                Ok(other) => return TaskOutcome::Lost(LossReason::Other(format!(
                    "unexpected placement response {:#04x}",
                    other.type_byte()
                ))),
                Err(e) if e.is_code(ErrorCode::CapacityExhausted) => {
                    return TaskOutcome::Lost(LossReason::CapacityExhausted)
                }
                Err(e) if e.is_code(ErrorCode::NotFound) => return TaskOutcome::Skipped,
                Err(e) => return TaskOutcome::Lost(LossReason::Other(e.to_string())),
            };

            // No write to a destination may begin after the deadline.
            if self.clock.now() >= deadline {
                return TaskOutcome::Lost(LossReason::DeadlineExceeded);
            }
            let write = self.pool.request(
                &target.address,
                &Message::WriteBlock {
                    block,
                    offset: 0,
                    crc,
                    data: data.clone(),
                },
            );
            match write {
                Ok(Message::WriteBlockOk) => {}
                Ok(other) => return TaskOutcome::Lost(LossReason::Other(format!(
                    "unexpected write response {:#04x}",
                    other.type_byte()
                ))),
                Err(e)
                    if matches!(e, Error::Io(_))
                        || e.is_code(ErrorCode::CapacityExhausted)
                        || e.is_code(ErrorCode::NodeDraining) =>
                {
                    // Destination died or filled; try another one.
                    exclude.push(target.id);
                    continue;
                }
                Err(e) => return TaskOutcome::Lost(LossReason::Other(e.to_string())),
            }

            match self.commit_with_one_retry(task, target.id, proposal.version) {
                CommitResult::Committed => {
                    return TaskOutcome::Moved {
                        bytes: data.len() as u64,
                    }
                }
                CommitResult::RetryElsewhere => {
                    self.cleanup_copy(&target, block);
                    exclude.push(target.id);
                    continue;
                }
                CommitResult::Skipped => {
                    self.cleanup_copy(&target, block);
                    return TaskOutcome::Skipped;
                }
                CommitResult::Lost(reason) => {
                    self.cleanup_copy(&target, block);
                    return TaskOutcome::Lost(reason);
                }
            }
        }
        TaskOutcome::Lost(LossReason::Other(format!(
            "no destination accepted block {block}"
        )))
    }

    fn commit_with_one_retry(
        &self,
        task: &RelocationTask,
        target: DatanodeId,
        mut expected_version: u64,
    ) -> CommitResult {
        for retry in 0..2 {
            let commit = self.pool.request(
                &self.cfg.namenode,
                &Message::CommitRelocation {
                    block: task.block.id,
                    new_node: target,
                    expected_version,
                },
            );
            match commit {
                Ok(Message::CommitRelocationOk { .. }) => return CommitResult::Committed,
                Ok(other) => {
                    return CommitResult::Lost(LossReason::Other(format!(
                        "unexpected commit response {:#04x}",
                        other.type_byte()
                    )))
                }
                Err(e) if e.is_code(ErrorCode::StaleLocation) && retry == 0 => {
                    // One metadata re-read, then one retry.
                    match self.refetch_block(task) {
                        Some(desc) if desc.location == BlockLocation::Node(task.source) => {
                            expected_version = desc.version;
                        }
                        Some(desc) if desc.location.is_lost() => {
                            return CommitResult::Lost(LossReason::Other(
                                "block lost before commit".into(),
                            ))
                        }
                        // Moved or replaced by someone else: our copy is moot.
                        Some(_) | None => return CommitResult::Skipped,
                    }
                }
                Err(e) if e.is_code(ErrorCode::NotFound) => return CommitResult::Skipped,
                Err(e) if e.is_code(ErrorCode::Conflict) => {
                    return CommitResult::Lost(LossReason::Other(
                        "block lost before commit".into(),
                    ))
                }
                Err(e)
                    if e.is_code(ErrorCode::NodeDraining)
                        || e.is_code(ErrorCode::CapacityExhausted) =>
                {
                    return CommitResult::RetryElsewhere
                }
                Err(e) => return CommitResult::Lost(LossReason::Other(e.to_string())),
            }
        }
        CommitResult::Lost(LossReason::Other("stale commit after retry".into()))
    }

    fn refetch_block(&self, task: &RelocationTask) -> Option<ess_proto::BlockDescriptor> {
        let resp = self
            .pool
            .request(
                &self.cfg.namenode,
                &Message::GetMetadata {
                    name: task.object.clone(),
                },
            )
            .ok()?;
        match resp {
            Message::GetMetadataOk { meta, .. } => {
                meta.blocks.iter().find(|b| b.id == task.block.id).copied()
            }
            _ => None,
        }
    }

    fn cleanup_copy(&self, target: &DatanodeRef, block: BlockId) {
        let _ = self
            .pool
            .request(&target.address, &Message::DeleteBlock { block });
    }
}

enum CommitResult {
    Committed,
    RetryElsewhere,
    Skipped,
    Lost(LossReason),
}

struct DrainRunner<'a> {
    relocator: &'a Relocator,
    source: DatanodeRef,
}

impl TaskRunner for DrainRunner<'_> {
    fn run(&self, task: &RelocationTask, deadline: Timestamp) -> TaskOutcome {
        self.relocator.relocate_block(task, &self.source, deadline)
    }
}

fn unexpected(msg: &Message) -> Error {
    Fault::protocol(format!("unexpected response type {:#04x}", msg.type_byte())).into()
}
