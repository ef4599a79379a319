//! The agent task protocol shared by the event-loop and executor strategies.
//!
//! Each agent enqueues at most one task at a time. In the synchronous
//! internal mode a task is one whole step; in the stage-pipelined mode each
//! stage is its own task and chains the next one, so stages of one cycle may
//! run on different carriers while per-agent stage order is preserved. An
//! idle agent leaves the queue entirely and is re-enqueued when a message
//! arrives for it.
//!
//! Initial tasks are enqueued in a seed-determined order before any carrier
//! starts, which pins down the whole execution for single-carrier engines.

use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::event_loop::{SubmitError, Ticket};
use crate::agent::{AgentCell, AgentId, CycleStage, InternalMode};
use crate::mailbox::Mailbox;
use crate::mas::Mas;
use crate::trace::TraceSink;
use crate::transport::InMemoryTransport;

/// A FIFO task engine the protocol can drive.
pub(crate) trait TaskQueue: Send + Sync {
    fn submit_task(&self, task: Box<dyn FnOnce() + Send>) -> Result<Ticket, SubmitError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SchedState {
    /// Not queued; will be rescheduled by a delivery.
    Idle,
    /// A task for this agent is in the queue (or chained mid-cycle).
    Scheduled,
    /// A task for this agent is executing right now.
    Running,
}

#[derive(Debug, Clone, Copy)]
enum TaskPhase {
    Step,
    Stage(CycleStage),
}

struct AgentSlot {
    name: AgentId,
    cell: Mutex<AgentCell>,
    mailbox: Arc<Mailbox>,
    sched: Mutex<SchedState>,
}

/// All agents wired onto one task engine.
pub(crate) struct TaskNet {
    queue: Arc<dyn TaskQueue>,
    transport: Arc<InMemoryTransport>,
    sink: Arc<TraceSink>,
    agents: Vec<AgentSlot>,
    pipelined: bool,
}

impl TaskNet {
    pub(crate) fn all_idle(&self) -> bool {
        self.agents
            .iter()
            .all(|slot| *slot.sched.lock().unwrap() == SchedState::Idle)
    }

    fn first_phase(&self) -> TaskPhase {
        if self.pipelined {
            TaskPhase::Stage(CycleStage::Sense)
        } else {
            TaskPhase::Step
        }
    }

    fn submit(self: &Arc<Self>, idx: usize, phase: TaskPhase) {
        let net = Arc::clone(self);
        // Submission failure only happens during shutdown; the agent then
        // simply stays unscheduled.
        let _ = self
            .queue
            .submit_task(Box::new(move || net.run_task(idx, phase)));
    }

    /// Reschedules an agent when a message is delivered to it.
    fn notify(self: &Arc<Self>, recipient: &str) {
        let Some(idx) = self.agents.iter().position(|s| s.name == recipient) else {
            return;
        };
        let slot = &self.agents[idx];
        let mut sched = slot.sched.lock().unwrap();
        if *sched == SchedState::Idle {
            *sched = SchedState::Scheduled;
            drop(sched);
            self.submit(idx, self.first_phase());
        }
        // Scheduled or Running: the queued/running task observes the mailbox
        // at its end-of-cycle check.
    }

    fn run_task(self: Arc<Self>, idx: usize, phase: TaskPhase) {
        let slot = &self.agents[idx];
        *slot.sched.lock().unwrap() = SchedState::Running;
        let mut cell = slot.cell.lock().unwrap();
        match phase {
            TaskPhase::Step => {
                cell.step(&slot.mailbox, self.transport.as_ref(), &self.sink);
                let has_pending = cell.has_pending_work();
                drop(cell);
                self.end_cycle(idx, has_pending);
            }
            TaskPhase::Stage(CycleStage::Sense) => {
                let outcome = cell.sense(&slot.mailbox, &self.sink);
                drop(cell);
                if outcome.productive {
                    self.chain(idx, CycleStage::Deliberate);
                } else {
                    self.end_cycle(idx, false);
                }
            }
            TaskPhase::Stage(CycleStage::Deliberate) => {
                cell.deliberate(&self.sink);
                drop(cell);
                self.chain(idx, CycleStage::Act);
            }
            TaskPhase::Stage(CycleStage::Act) => {
                cell.act(self.transport.as_ref(), &self.sink);
                let has_pending = cell.has_pending_work();
                drop(cell);
                self.end_cycle(idx, has_pending);
            }
        }
    }

    fn chain(self: &Arc<Self>, idx: usize, stage: CycleStage) {
        *self.agents[idx].sched.lock().unwrap() = SchedState::Scheduled;
        self.submit(idx, TaskPhase::Stage(stage));
    }

    fn end_cycle(self: &Arc<Self>, idx: usize, cell_has_pending: bool) {
        let slot = &self.agents[idx];
        let mut sched = slot.sched.lock().unwrap();
        // The mailbox check must happen under the sched lock: a concurrent
        // delivery either lands before the check (seen here) or blocks on
        // the lock and finds the state Idle.
        if cell_has_pending || !slot.mailbox.is_empty() {
            *sched = SchedState::Scheduled;
            drop(sched);
            self.submit(idx, self.first_phase());
        } else {
            *sched = SchedState::Idle;
        }
    }
}

/// Builds the task net for an assembled MAS, installs the delivery waker and
/// enqueues the initial task per agent in seeded order. The engine should
/// not be running yet; start it after this returns.
pub(crate) fn wire_agents(
    mas: Mas,
    sink: Arc<TraceSink>,
    queue: Arc<dyn TaskQueue>,
) -> Arc<TaskNet> {
    let pipelined = mas.config.internal.mode == InternalMode::StagePipelined;
    let agents: Vec<AgentSlot> = mas
        .agents
        .into_iter()
        .map(|harness| AgentSlot {
            name: harness.cell.name().to_string(),
            cell: Mutex::new(harness.cell),
            mailbox: harness.mailbox,
            sched: Mutex::new(SchedState::Scheduled),
        })
        .collect();
    let net = Arc::new(TaskNet {
        queue,
        transport: Arc::clone(&mas.transport),
        sink,
        agents,
        pipelined,
    });

    let waker_net = Arc::clone(&net);
    mas.transport
        .set_waker(Arc::new(move |recipient| waker_net.notify(recipient)));

    // Initial placement is the one seed-dependent choice.
    let mut order: Vec<usize> = (0..net.agents.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mas.config.seed);
    order.shuffle(&mut rng);
    for idx in order {
        net.submit(idx, net.first_phase());
    }
    net
}
