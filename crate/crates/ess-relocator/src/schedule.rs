//! Deadline-bounded task scheduler: largest blocks first, bounded
//! parallelism, and hard abandonment of everything still queued when the
//! deadline passes.

use std::collections::VecDeque;

use ess_proto::clock::{Clock, Timestamp, WorkerGuard};
use parking_lot::Mutex;

use crate::{LossReason, RelocationTask, TaskOutcome};

/// Executes one relocation. Implementations must give up (returning
/// `Lost(DeadlineExceeded)`) rather than let work spill past the deadline.
pub trait TaskRunner: Sync {
    fn run(&self, task: &RelocationTask, deadline: Timestamp) -> TaskOutcome;
}

/// Runs `tasks` with up to `parallelism` concurrent transfers until the list
/// is exhausted or `deadline` passes. Largest blocks go first: when transfers
/// are bandwidth-bound that maximizes bytes saved. No task starts at or after
/// the deadline; tasks still queued then are recorded as lost.
pub fn schedule<R: TaskRunner>(
    mut tasks: Vec<RelocationTask>,
    deadline: Timestamp,
    parallelism: usize,
    runner: &R,
    clock: &dyn Clock,
) -> Vec<(RelocationTask, TaskOutcome)> {
    assert!(parallelism >= 1, "parallelism must be at least 1");
    if tasks.is_empty() {
        return Vec::new();
    }
    tasks.sort_by(|a, b| {
        b.block
            .length
            .cmp(&a.block.length)
            .then(a.block.id.cmp(&b.block.id))
    });

    let n = tasks.len();
    let queue: Mutex<VecDeque<(usize, RelocationTask)>> =
        Mutex::new(tasks.into_iter().enumerate().collect());
    let results: Vec<Mutex<Option<(RelocationTask, TaskOutcome)>>> =
        (0..n).map(|_| Mutex::new(None)).collect();

    let workers = parallelism.min(n);
    let barrier = std::sync::Barrier::new(workers);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let _guard = WorkerGuard::new(clock);
                barrier.wait();
                loop {
                    let item = {
                        let mut queue = queue.lock();
                        if clock.now() >= deadline {
                            // Abandon everything still queued.
                            while let Some((i, task)) = queue.pop_front() {
                                *results[i].lock() =
                                    Some((task, TaskOutcome::Lost(LossReason::DeadlineExceeded)));
                            }
                            return;
                        }
                        queue.pop_front()
                    };
                    let Some((i, task)) = item else { return };
                    let outcome = runner.run(&task, deadline);
                    *results[i].lock() = Some((task, outcome));
                }
            });
        }
    });

    results
        .into_iter()
        .map(|slot| slot.into_inner().expect("every slot decided"))
        .collect()
}
