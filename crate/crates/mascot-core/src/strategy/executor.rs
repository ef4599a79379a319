//! All-Agents-One-Executor: a shared FIFO task queue consumed by a pool of
//! carrier threads. Fixed-size pools bound the degree of parallelism at N;
//! variable-size pools resize toward the runnable task count within
//! [min, max], growing on demand and shrinking only when a carrier has been
//! idle past a grace period.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::event_loop::{SubmitError, Ticket};
use super::tasks::{self, TaskQueue};
use super::{ExecutionHandle, ExecutionStrategy, LaunchError, RunController, StrategyKind};
use crate::mas::{Mas, RunMonitor};
use crate::trace::TraceSink;
use crate::transport::RunStats;

/// How long an idle surplus carrier waits before retiring.
const SHRINK_GRACE: Duration = Duration::from_millis(10);

type Job = (Ticket, Box<dyn FnOnce() + Send>);

struct PoolShared {
    queue: Mutex<VecDeque<Job>>,
    available: Condvar,
    stopped: AtomicBool,
    submitted: AtomicU64,
    completed: AtomicU64,
    next_ticket: AtomicU64,
    active: AtomicUsize,
    alive: AtomicUsize,
    high_water: AtomicUsize,
    min: usize,
    max: usize,
}

/// A fixed- or variable-size thread-pool executor over one FIFO queue.
/// Like [`super::EventLoop`], it starts idle so initial batches enqueue
/// deterministically before any carrier runs.
pub struct TaskPool {
    shared: Arc<PoolShared>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl TaskPool {
    /// A pool with exactly `carriers` threads for its whole lifetime.
    pub fn fixed(carriers: usize) -> Result<Self, LaunchError> {
        if carriers < 1 {
            return Err(LaunchError::Config(
                "fixed executor needs at least one carrier".into(),
            ));
        }
        Ok(Self::build(carriers, carriers))
    }

    /// A pool resizing within `[min, max]` carriers.
    pub fn variable(min: usize, max: usize) -> Result<Self, LaunchError> {
        if min < 1 || min > max {
            return Err(LaunchError::Config(
                "variable executor needs 1 <= min <= max".into(),
            ));
        }
        Ok(Self::build(min, max))
    }

    fn build(min: usize, max: usize) -> Self {
        TaskPool {
            shared: Arc::new(PoolShared {
                queue: Mutex::new(VecDeque::new()),
                available: Condvar::new(),
                stopped: AtomicBool::new(false),
                submitted: AtomicU64::new(0),
                completed: AtomicU64::new(0),
                next_ticket: AtomicU64::new(1),
                active: AtomicUsize::new(0),
                alive: AtomicUsize::new(0),
                high_water: AtomicUsize::new(0),
                min,
                max,
            }),
            workers: Mutex::new(Vec::new()),
        }
    }

    /// Starts the initial carriers (min for variable pools, N for fixed).
    pub fn run(&self) {
        for _ in 0..self.shared.min {
            self.spawn_worker();
        }
    }

    pub fn submit(&self, task: Box<dyn FnOnce() + Send>) -> Result<Ticket, SubmitError> {
        if self.shared.stopped.load(Ordering::Acquire) {
            return Err(SubmitError::Stopped);
        }
        let ticket = Ticket(self.shared.next_ticket.fetch_add(1, Ordering::Relaxed));
        let runnable = {
            let mut queue = self.shared.queue.lock().unwrap();
            if self.shared.stopped.load(Ordering::Acquire) {
                return Err(SubmitError::Stopped);
            }
            queue.push_back((ticket, task));
            self.shared.submitted.fetch_add(1, Ordering::Release);
            queue.len() + self.shared.active.load(Ordering::Acquire)
        };
        self.shared.available.notify_one();
        if self.shared.max > self.shared.min {
            self.resize(runnable);
        }
        Ok(ticket)
    }

    /// Adjusts the carrier count toward `clamp(runnable, min, max)`. Growth
    /// is immediate; shrinking happens cooperatively when carriers idle out,
    /// so no running task is ever interrupted. Returns the new target.
    pub fn resize(&self, runnable: usize) -> usize {
        let target = runnable.clamp(self.shared.min, self.shared.max);
        if !self.shared.stopped.load(Ordering::Acquire) {
            while self.shared.alive.load(Ordering::Acquire) < target {
                self.spawn_worker();
            }
        }
        target
    }

    fn spawn_worker(&self) {
        let shared = Arc::clone(&self.shared);
        let alive_now = shared.alive.fetch_add(1, Ordering::AcqRel) + 1;
        shared.high_water.fetch_max(alive_now, Ordering::AcqRel);
        let can_shrink = shared.max > shared.min;
        let worker = std::thread::Builder::new()
            .name("pool-carrier".into())
            .spawn(move || {
                loop {
                    let job = {
                        let mut queue = shared.queue.lock().unwrap();
                        loop {
                            if shared.stopped.load(Ordering::Acquire) {
                                shared.alive.fetch_sub(1, Ordering::AcqRel);
                                return;
                            }
                            if let Some(job) = queue.pop_front() {
                                break job;
                            }
                            if can_shrink {
                                let (q, timeout) = shared
                                    .available
                                    .wait_timeout(queue, SHRINK_GRACE)
                                    .unwrap();
                                queue = q;
                                if timeout.timed_out()
                                    && queue.is_empty()
                                    && retire_one(&shared.alive, shared.min)
                                {
                                    return;
                                }
                            } else {
                                queue = shared.available.wait(queue).unwrap();
                            }
                        }
                    };
                    shared.active.fetch_add(1, Ordering::AcqRel);
                    (job.1)();
                    shared.active.fetch_sub(1, Ordering::AcqRel);
                    shared.completed.fetch_add(1, Ordering::Release);
                }
            })
            .expect("spawn pool carrier");
        self.workers.lock().unwrap().push(worker);
    }

    pub fn pending(&self) -> u64 {
        self.shared.submitted.load(Ordering::Acquire) - self.shared.completed.load(Ordering::Acquire)
    }

    pub fn completed(&self) -> u64 {
        self.shared.completed.load(Ordering::Acquire)
    }

    /// Most carriers alive at any one time.
    pub fn carrier_high_water(&self) -> usize {
        self.shared.high_water.load(Ordering::Acquire)
    }

    pub fn carriers_alive(&self) -> usize {
        self.shared.alive.load(Ordering::Acquire)
    }

    /// Stops all carriers after their tasks in flight; idempotent.
    pub fn stop(&self) {
        self.shared.stopped.store(true, Ordering::Release);
        self.shared.available.notify_all();
        let workers = std::mem::take(&mut *self.workers.lock().unwrap());
        for worker in workers {
            let _ = worker.join();
        }
    }

    /// Blocks until no task is queued or running, or the timeout elapses.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        while self.pending() > 0 {
            if std::time::Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_micros(100));
        }
        true
    }
}

impl TaskQueue for TaskPool {
    fn submit_task(&self, task: Box<dyn FnOnce() + Send>) -> Result<Ticket, SubmitError> {
        self.submit(task)
    }
}

/// Decrements `alive` only while it stays at or above `min`, so concurrent
/// idle timeouts cannot retire the pool below its floor.
fn retire_one(alive: &AtomicUsize, min: usize) -> bool {
    let mut current = alive.load(Ordering::Acquire);
    loop {
        if current <= min {
            return false;
        }
        match alive.compare_exchange(current, current - 1, Ordering::AcqRel, Ordering::Acquire) {
            Ok(_) => return true,
            Err(now) => current = now,
        }
    }
}

pub struct ExecutorFixed {
    pub carriers: usize,
}

impl ExecutionStrategy for ExecutorFixed {
    fn kind(&self) -> StrategyKind {
        StrategyKind::ExecutorFixed {
            carriers: self.carriers,
        }
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = std::time::Instant::now();
        let pool = Arc::new(TaskPool::fixed(self.carriers)?);
        launch_on_pool(self.kind(), started, pool, mas, sink)
    }
}

pub struct ExecutorVariable {
    pub min: usize,
    pub max: usize,
}

impl ExecutionStrategy for ExecutorVariable {
    fn kind(&self) -> StrategyKind {
        StrategyKind::ExecutorVariable {
            min: self.min,
            max: self.max,
        }
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = std::time::Instant::now();
        let pool = Arc::new(TaskPool::variable(self.min, self.max)?);
        launch_on_pool(self.kind(), started, pool, mas, sink)
    }
}

fn launch_on_pool(
    kind: StrategyKind,
    started: std::time::Instant,
    pool: Arc<TaskPool>,
    mas: Mas,
    sink: Arc<TraceSink>,
) -> Result<ExecutionHandle, LaunchError> {
    let monitor = Arc::clone(&mas.monitor);
    let net = tasks::wire_agents(mas, sink, Arc::clone(&pool) as Arc<dyn TaskQueue>);
    pool.run();
    Ok(ExecutionHandle::new(
        kind,
        started,
        Box::new(PoolRun { monitor, net, pool }),
    ))
}

struct PoolRun {
    monitor: Arc<RunMonitor>,
    net: Arc<tasks::TaskNet>,
    pool: Arc<TaskPool>,
}

impl RunController for PoolRun {
    fn quiesced(&self) -> bool {
        self.pool.pending() == 0 && self.net.all_idle() && self.monitor.mailboxes_empty()
    }

    fn stop(&mut self) {
        self.pool.stop();
        self.monitor.stats().count_tasks(self.pool.completed());
        self.monitor
            .stats()
            .raise_carrier_high_water(self.pool.carrier_high_water() as u64);
    }

    fn stats(&self) -> RunStats {
        self.monitor.stats().snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier;
    use std::collections::BTreeSet;

    #[test]
    fn fixed_pool_rejects_zero_carriers() {
        assert!(matches!(TaskPool::fixed(0), Err(LaunchError::Config(_))));
        assert!(matches!(
            TaskPool::variable(0, 4),
            Err(LaunchError::Config(_))
        ));
        assert!(matches!(
            TaskPool::variable(5, 4),
            Err(LaunchError::Config(_))
        ));
    }

    #[test]
    fn hundred_tasks_complete_on_at_most_four_carriers() {
        let pool = TaskPool::fixed(4).unwrap();
        let seen = Arc::new(Mutex::new(BTreeSet::new()));
        for _ in 0..100 {
            let seen = Arc::clone(&seen);
            pool.submit(Box::new(move || {
                seen.lock().unwrap().insert(carrier::current_carrier());
            }))
            .unwrap();
        }
        pool.run();
        assert!(pool.wait_idle(Duration::from_secs(5)));
        assert_eq!(pool.completed(), 100);
        let distinct = seen.lock().unwrap().len();
        assert!(distinct <= 4, "saw {distinct} carriers");
        pool.stop();
    }

    #[test]
    fn resize_clamps_to_the_configured_range() {
        let pool = TaskPool::variable(1, 8).unwrap();
        pool.run();
        assert_eq!(pool.resize(3), 3);
        assert_eq!(pool.resize(0), 1);
        assert_eq!(pool.resize(100), 8);
        // Growth is observable immediately and within bounds.
        assert!(pool.carriers_alive() >= 3);
        assert!(pool.carrier_high_water() <= 8);
        pool.stop();
    }

    #[test]
    fn variable_pool_shrinks_back_to_min_when_idle() {
        let pool = TaskPool::variable(1, 4).unwrap();
        pool.run();
        for _ in 0..16 {
            pool.submit(Box::new(|| std::thread::sleep(Duration::from_millis(2))))
                .unwrap();
        }
        assert!(pool.wait_idle(Duration::from_secs(5)));
        let deadline = std::time::Instant::now() + Duration::from_secs(2);
        while pool.carriers_alive() > 1 && std::time::Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        assert_eq!(pool.carriers_alive(), 1);
        assert!(pool.carrier_high_water() >= 2);
        pool.stop();
    }

    #[test]
    fn submit_after_stop_is_rejected() {
        let pool = TaskPool::fixed(1).unwrap();
        pool.run();
        pool.stop();
        assert_eq!(
            pool.submit(Box::new(|| {})).unwrap_err(),
            SubmitError::Stopped
        );
    }
}
