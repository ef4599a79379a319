//! All-Agents-One-Event-Loop: a single thread draining a FIFO task queue.
//!
//! Tasks run strictly in enqueue order and every submitted task is
//! eventually executed while the loop is running. Fairness across agents
//! holds when tasks re-enqueue their successors, which is exactly what the
//! agent task protocol does.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use super::tasks::{self, TaskQueue};
use super::{ExecutionHandle, ExecutionStrategy, LaunchError, RunController, StrategyKind};
use crate::mas::{Mas, RunMonitor};
use crate::trace::TraceSink;
use crate::transport::RunStats;

/// Receipt for one enqueued task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ticket(pub u64);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("task queue is stopped")]
    Stopped,
}

type Job = (Ticket, Box<dyn FnOnce() + Send>);

struct LoopShared {
    queue: Mutex<VecDeque<Job>>,
    available: Condvar,
    stopped: AtomicBool,
    submitted: AtomicU64,
    completed: AtomicU64,
    next_ticket: AtomicU64,
}

/// A single-carrier FIFO task loop. Created idle so callers can stage an
/// initial batch deterministically, then started with [`EventLoop::run`].
pub struct EventLoop {
    shared: Arc<LoopShared>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Default for EventLoop {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLoop {
    pub fn new() -> Self {
        EventLoop {
            shared: Arc::new(LoopShared {
                queue: Mutex::new(VecDeque::new()),
                available: Condvar::new(),
                stopped: AtomicBool::new(false),
                submitted: AtomicU64::new(0),
                completed: AtomicU64::new(0),
                next_ticket: AtomicU64::new(1),
            }),
            worker: Mutex::new(None),
        }
    }

    /// Appends a task to the FIFO queue. Rejected once the loop is stopped.
    pub fn submit(&self, task: Box<dyn FnOnce() + Send>) -> Result<Ticket, SubmitError> {
        if self.shared.stopped.load(Ordering::Acquire) {
            return Err(SubmitError::Stopped);
        }
        let ticket = Ticket(self.shared.next_ticket.fetch_add(1, Ordering::Relaxed));
        let mut queue = self.shared.queue.lock().unwrap();
        if self.shared.stopped.load(Ordering::Acquire) {
            return Err(SubmitError::Stopped);
        }
        queue.push_back((ticket, task));
        self.shared.submitted.fetch_add(1, Ordering::Release);
        drop(queue);
        self.shared.available.notify_one();
        Ok(ticket)
    }

    /// Spawns the loop's carrier thread.
    pub fn run(&self) {
        let shared = Arc::clone(&self.shared);
        let worker = std::thread::Builder::new()
            .name("event-loop".into())
            .spawn(move || loop {
                let job = {
                    let mut queue = shared.queue.lock().unwrap();
                    loop {
                        if shared.stopped.load(Ordering::Acquire) {
                            return;
                        }
                        if let Some(job) = queue.pop_front() {
                            break job;
                        }
                        queue = shared.available.wait(queue).unwrap();
                    }
                };
                (job.1)();
                shared.completed.fetch_add(1, Ordering::Release);
            })
            .expect("spawn event loop thread");
        *self.worker.lock().unwrap() = Some(worker);
    }

    /// Submitted but not yet completed task count.
    pub fn pending(&self) -> u64 {
        self.shared.submitted.load(Ordering::Acquire) - self.shared.completed.load(Ordering::Acquire)
    }

    pub fn completed(&self) -> u64 {
        self.shared.completed.load(Ordering::Acquire)
    }

    /// Stops the loop after the task in flight, dropping queued tasks.
    /// Idempotent.
    pub fn stop(&self) {
        self.shared.stopped.store(true, Ordering::Release);
        self.shared.available.notify_all();
        if let Some(worker) = self.worker.lock().unwrap().take() {
            let _ = worker.join();
        }
    }
}

impl TaskQueue for EventLoop {
    fn submit_task(&self, task: Box<dyn FnOnce() + Send>) -> Result<Ticket, SubmitError> {
        self.submit(task)
    }
}

pub struct AllAgentsOneEventLoop;

impl ExecutionStrategy for AllAgentsOneEventLoop {
    fn kind(&self) -> StrategyKind {
        StrategyKind::AllAgentsOneEventLoop
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = std::time::Instant::now();
        let monitor = Arc::clone(&mas.monitor);
        monitor.stats().raise_carrier_high_water(1);
        let event_loop = Arc::new(EventLoop::new());
        let net = tasks::wire_agents(mas, sink, Arc::clone(&event_loop) as Arc<dyn TaskQueue>);
        event_loop.run();
        Ok(ExecutionHandle::new(
            StrategyKind::AllAgentsOneEventLoop,
            started,
            Box::new(EventLoopRun {
                monitor,
                net,
                event_loop,
            }),
        ))
    }
}

struct EventLoopRun {
    monitor: Arc<RunMonitor>,
    net: Arc<tasks::TaskNet>,
    event_loop: Arc<EventLoop>,
}

impl RunController for EventLoopRun {
    fn quiesced(&self) -> bool {
        self.event_loop.pending() == 0 && self.net.all_idle() && self.monitor.mailboxes_empty()
    }

    fn stop(&mut self) {
        self.event_loop.stop();
        self.monitor.stats().count_tasks(self.event_loop.completed());
    }

    fn stats(&self) -> RunStats {
        self.monitor.stats().snapshot()
    }
}
