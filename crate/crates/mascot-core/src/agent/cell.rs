//! The control loop of one agent, decomposed into schedulable stages.
//!
//! A cell advances through sense → deliberate → act. Each productive cycle
//! emits trace events; idle cycles (nothing sensed, no live intentions)
//! emit nothing and do not advance the cycle counter, so traces record
//! logical activity only. At most one cycle is in flight per agent; the
//! stage runners enforce the order through an explicit stage cursor, however
//! the stages end up mapped onto carriers.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use super::{
    Action, AgentId, AgentSpec, Arg, Event, Intention, InternalMode, InternalModelConfig,
    Message, PlanRule, Target, Trigger, Value,
};
use crate::carrier;
use crate::mailbox::Mailbox;
use crate::trace::{Stage, TraceEvent, TraceSink};
use crate::transport::{DeliveryError, Effector, StatsCollector};

/// Per-agent flags shared with the run monitor.
#[derive(Default)]
pub struct AgentBoard {
    idle_streak: AtomicU64,
    failed: AtomicBool,
    cycles: AtomicU64,
    dropped_events: AtomicU64,
}

impl AgentBoard {
    pub fn idle_streak(&self) -> u64 {
        self.idle_streak.load(Ordering::Relaxed)
    }

    pub fn failed(&self) -> bool {
        self.failed.load(Ordering::Relaxed)
    }

    pub fn cycles(&self) -> u64 {
        self.cycles.load(Ordering::Relaxed)
    }

    pub fn dropped_events(&self) -> u64 {
        self.dropped_events.load(Ordering::Relaxed)
    }
}

/// Which stage the cell will run next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStage {
    Sense,
    Deliberate,
    Act,
}

/// One stage task from decomposing a cycle, with its chaining successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTask {
    pub agent: AgentId,
    pub stage: CycleStage,
    /// Stage to enqueue when this one completes; `None` ends the cycle (the
    /// next sense belongs to the following cycle).
    pub then: Option<CycleStage>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InternalModeError {
    #[error("stage decomposition requires the stage-pipelined internal mode")]
    SynchronousMode,
}

/// What one sense stage produced.
#[derive(Debug, Clone)]
pub struct SenseOutcome {
    pub events: Vec<Event>,
    /// False means the cycle did not start (idle).
    pub productive: bool,
}

/// What one deliberation selected.
#[derive(Debug, Clone)]
pub struct DeliberationOutcome {
    pub spawned: usize,
    pub selected: Vec<(u64, Action)>,
}

/// Result of one synchronous step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub idle: bool,
    pub failed: bool,
    pub events: Vec<TraceEvent>,
}

struct SelectedAction {
    intention: u64,
    body_index: usize,
    action: Action,
    bindings: BTreeMap<String, Value>,
}

pub struct AgentCell {
    name: AgentId,
    rules: Vec<PlanRule>,
    beliefs: BTreeMap<String, Value>,
    intentions: Vec<Intention>,
    rr_cursor: usize,
    next_intention_id: u64,
    pending_goals: Vec<(String, bool)>,
    pending_events: Vec<Event>,
    cycle: u64,
    stage: CycleStage,
    cycle_events: Vec<Event>,
    selected: Vec<SelectedAction>,
    internal: InternalModelConfig,
    send_seqs: BTreeMap<AgentId, u64>,
    failed: bool,
    board: Arc<AgentBoard>,
    stats: Arc<StatsCollector>,
    step_events: Vec<TraceEvent>,
}

impl AgentCell {
    pub fn new(
        spec: &AgentSpec,
        internal: InternalModelConfig,
        board: Arc<AgentBoard>,
        stats: Arc<StatsCollector>,
    ) -> Self {
        AgentCell {
            name: spec.name.clone(),
            rules: spec.rules.clone(),
            beliefs: spec
                .initial_beliefs
                .iter()
                .map(|b| (b.key.clone(), b.value.clone()))
                .collect(),
            intentions: Vec::new(),
            rr_cursor: 0,
            next_intention_id: 1,
            pending_goals: spec.initial_goals.iter().map(|g| (g.clone(), false)).collect(),
            pending_events: Vec::new(),
            cycle: 0,
            stage: CycleStage::Sense,
            cycle_events: Vec::new(),
            selected: Vec::new(),
            internal,
            send_seqs: BTreeMap::new(),
            failed: false,
            board,
            stats,
            step_events: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn beliefs(&self) -> &BTreeMap<String, Value> {
        &self.beliefs
    }

    pub fn pending_stage(&self) -> CycleStage {
        self.stage
    }

    pub fn live_intentions(&self) -> usize {
        self.intentions.len()
    }

    /// True when the agent would do something if scheduled (ignoring its
    /// mailbox, which the caller owns).
    pub fn has_pending_work(&self) -> bool {
        !self.failed
            && (!self.intentions.is_empty()
                || !self.pending_events.is_empty()
                || !self.pending_goals.is_empty()
                || self.stage != CycleStage::Sense)
    }

    /// Drains percepts and converts pending goals into events, starting a new
    /// cycle when there is anything to do. Caller must be the owning
    /// strategy; enforced structurally by `&mut self`.
    pub fn sense(&mut self, mailbox: &Mailbox, sink: &TraceSink) -> SenseOutcome {
        debug_assert_eq!(self.stage, CycleStage::Sense);
        self.step_events.clear();
        if self.failed {
            self.board.idle_streak.fetch_add(1, Ordering::Relaxed);
            return SenseOutcome {
                events: Vec::new(),
                productive: false,
            };
        }
        let mut events: Vec<Event> = mailbox
            .drain_up_to(self.internal.max_percepts_per_sense)
            .into_iter()
            .map(Event::MessageReceived)
            .collect();
        events.append(&mut self.pending_events);
        for (goal, parallel) in self.pending_goals.drain(..) {
            events.push(Event::GoalAdded { goal, parallel });
        }
        if events.is_empty() && self.intentions.is_empty() {
            self.board.idle_streak.fetch_add(1, Ordering::Relaxed);
            return SenseOutcome {
                events,
                productive: false,
            };
        }
        self.cycle += 1;
        self.board.idle_streak.store(0, Ordering::Relaxed);
        self.board.cycles.fetch_add(1, Ordering::Relaxed);
        self.emit(sink, Stage::Sense, None, format!("sensed={}", events.len()));
        self.cycle_events = events.clone();
        self.stage = CycleStage::Deliberate;
        SenseOutcome {
            events,
            productive: true,
        }
    }

    /// Spawns intentions for the cycle's events (first matching rule in
    /// declaration order wins; unmatched events are dropped and counted) and
    /// selects the next action(s) round-robin over live intentions.
    pub fn deliberate(&mut self, sink: &TraceSink) -> DeliberationOutcome {
        if self.stage != CycleStage::Deliberate {
            return DeliberationOutcome {
                spawned: 0,
                selected: Vec::new(),
            };
        }
        let events = std::mem::take(&mut self.cycle_events);
        let mut spawned = 0;
        for event in events {
            if self.spawn_for_event(event) {
                spawned += 1;
            } else {
                self.board.dropped_events.fetch_add(1, Ordering::Relaxed);
                self.stats.count_dropped_events(1);
            }
        }
        self.selected.clear();
        let budget = self.internal.actions_per_cycle().min(self.intentions.len());
        for _ in 0..budget {
            if self.intentions.is_empty() {
                break;
            }
            if self.rr_cursor >= self.intentions.len() {
                self.rr_cursor = 0;
            }
            let intention = &mut self.intentions[self.rr_cursor];
            let body_index = intention.body_len - intention.remaining.len();
            let action = intention.remaining.pop_front().expect("non-empty body");
            self.selected.push(SelectedAction {
                intention: intention.id,
                body_index,
                action,
                bindings: intention.bindings.clone(),
            });
            if intention.remaining.is_empty() {
                self.intentions.remove(self.rr_cursor);
            } else {
                self.rr_cursor += 1;
            }
        }
        let single = if self.selected.len() == 1 {
            Some(self.selected[0].intention)
        } else {
            None
        };
        self.emit(
            sink,
            Stage::Deliberate,
            single,
            format!("spawned={spawned} selected={}", self.selected.len()),
        );
        self.stage = CycleStage::Act;
        DeliberationOutcome {
            spawned,
            selected: self
                .selected
                .iter()
                .map(|s| (s.intention, s.action.clone()))
                .collect(),
        }
    }

    /// Executes the actions deliberation selected. A panic inside an action
    /// marks the agent failed; other agents are unaffected.
    pub fn act(&mut self, effector: &dyn Effector, sink: &TraceSink) {
        if self.stage != CycleStage::Act {
            return;
        }
        let batch = std::mem::take(&mut self.selected);
        let result = catch_unwind(AssertUnwindSafe(|| {
            for selected in &batch {
                self.execute(selected, effector, sink);
            }
        }));
        if let Err(panic) = result {
            let reason = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            self.failed = true;
            self.board.failed.store(true, Ordering::Relaxed);
            self.stats.count_failed_agent();
            let cycle = self.cycle;
            self.emit(sink, Stage::Act, None, format!("agent failed: {reason}"));
            let _ = cycle;
        }
        self.stage = CycleStage::Sense;
    }

    /// One synchronous cycle on the calling carrier: sense, then deliberate,
    /// then act, exactly once and in order.
    pub fn step(
        &mut self,
        mailbox: &Mailbox,
        effector: &dyn Effector,
        sink: &TraceSink,
    ) -> StepReport {
        let outcome = self.sense(mailbox, sink);
        if outcome.productive {
            self.deliberate(sink);
            self.act(effector, sink);
        }
        StepReport {
            idle: !outcome.productive,
            failed: self.failed,
            events: self.step_events.clone(),
        }
    }

    /// Describes one cycle as three chained stage tasks. Only available in
    /// the stage-pipelined internal mode; the chain is what lets task-based
    /// strategies run stages on different carriers while preserving
    /// per-agent stage order.
    pub fn decompose_step(&self) -> Result<Vec<StageTask>, InternalModeError> {
        if self.internal.mode != InternalMode::StagePipelined {
            return Err(InternalModeError::SynchronousMode);
        }
        Ok(vec![
            StageTask {
                agent: self.name.clone(),
                stage: CycleStage::Sense,
                then: Some(CycleStage::Deliberate),
            },
            StageTask {
                agent: self.name.clone(),
                stage: CycleStage::Deliberate,
                then: Some(CycleStage::Act),
            },
            StageTask {
                agent: self.name.clone(),
                stage: CycleStage::Act,
                then: None,
            },
        ])
    }

    fn spawn_for_event(&mut self, event: Event) -> bool {
        let matched = self.rules.iter().find(|rule| {
            let triggered = match (&rule.trigger, &event) {
                (Trigger::Message { performative }, Event::MessageReceived(m)) => {
                    m.performative == *performative
                }
                (Trigger::Belief { key }, Event::BeliefUpdated { key: k, .. }) => key == k,
                (Trigger::Goal { name }, Event::GoalAdded { goal, .. }) => name == goal,
                _ => false,
            };
            triggered && rule.guard.holds(&self.beliefs)
        });
        let Some(rule) = matched else {
            return false;
        };
        let mut bindings = BTreeMap::new();
        let mut parallel = false;
        match &event {
            Event::MessageReceived(m) => {
                bindings.insert("sender".to_string(), Value::Str(m.sender.clone()));
                bindings.insert(
                    "performative".to_string(),
                    Value::Str(m.performative.clone()),
                );
                bindings.insert("payload".to_string(), m.payload.clone());
            }
            Event::BeliefUpdated { key, value } => {
                bindings.insert("key".to_string(), Value::Str(key.clone()));
                bindings.insert("value".to_string(), value.clone());
            }
            Event::GoalAdded { goal, parallel: p } => {
                bindings.insert("goal".to_string(), Value::Str(goal.clone()));
                parallel = *p;
            }
        }
        let body: VecDeque<Action> = rule.body.iter().cloned().collect();
        self.intentions.push(Intention {
            id: self.next_intention_id,
            body_len: body.len(),
            remaining: body,
            bindings,
            spawned_parallel: parallel,
        });
        self.next_intention_id += 1;
        true
    }

    fn execute(&mut self, selected: &SelectedAction, effector: &dyn Effector, sink: &TraceSink) {
        let idx = selected.body_index;
        let intention = Some(selected.intention);
        match &selected.action {
            Action::Send {
                to,
                performative,
                payload,
            } => {
                let recipient = match to {
                    Target::Agent(name) => Ok(name.clone()),
                    Target::Sender => match selected.bindings.get("sender") {
                        Some(Value::Str(s)) => Ok(s.clone()),
                        _ => Err(DeliveryError::Transport("no sender binding".into())),
                    },
                };
                let detail = match recipient {
                    Ok(recipient) => {
                        let payload = self.resolve(payload, &selected.bindings);
                        let seq = self.send_seqs.entry(recipient.clone()).or_insert(0);
                        *seq += 1;
                        let message = Message {
                            sender: self.name.clone(),
                            recipient: recipient.clone(),
                            performative: performative.clone(),
                            payload,
                            send_seq: *seq,
                        };
                        match effector.deliver(message) {
                            Ok(_) => format!("a{idx} send {performative} -> {recipient}"),
                            Err(err) => format!(
                                "a{idx} send {performative} -> {recipient} [delivery-error: {err}]"
                            ),
                        }
                    }
                    Err(err) => format!("a{idx} send {performative} [delivery-error: {err}]"),
                };
                self.emit(sink, Stage::Act, intention, detail);
            }
            Action::UpdateBelief { key, value } => {
                let value = self.resolve(value, &selected.bindings);
                self.beliefs.insert(key.clone(), value.clone());
                self.pending_events.push(Event::BeliefUpdated {
                    key: key.clone(),
                    value,
                });
                self.emit(sink, Stage::Act, intention, format!("a{idx} update-belief {key}"));
            }
            Action::AddGoal { goal, parallel } => {
                self.pending_goals.push((goal.clone(), *parallel));
                let kind = if *parallel { "par-goal" } else { "add-goal" };
                self.emit(sink, Stage::Act, intention, format!("a{idx} {kind} {goal}"));
            }
            Action::RevealCarrier { note } => {
                // Exactly one trace event, carrying the current carrier id.
                self.emit(sink, Stage::Reveal, intention, format!("a{idx} reveal {note}"));
            }
            Action::BusySpin { duration } => {
                carrier::busy_spin(*duration);
                self.emit(
                    sink,
                    Stage::Act,
                    intention,
                    format!("a{idx} busy-spin {}us", duration.as_micros()),
                );
            }
            Action::Log { text } => {
                self.emit(sink, Stage::Act, intention, format!("a{idx} log {text}"));
            }
        }
    }

    fn resolve(&self, arg: &Arg, bindings: &BTreeMap<String, Value>) -> Value {
        match arg {
            Arg::Lit(value) => value.clone(),
            Arg::Binding(name) => bindings
                .get(name)
                .cloned()
                .unwrap_or_else(|| Value::Str(String::new())),
        }
    }

    fn emit(&mut self, sink: &TraceSink, stage: Stage, intention: Option<u64>, detail: String) {
        if let Some(event) = sink.record(&self.name, self.cycle, stage, intention, detail) {
            self.step_events.push(event);
        }
    }
}
