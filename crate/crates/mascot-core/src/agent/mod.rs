//! The agent model: beliefs, messages, events, plan rules, intentions.
//!
//! An [`AgentSpec`] is pure behavior. It never mentions how the agent will be
//! scheduled, which is what lets the same specification run unchanged under
//! every execution strategy.

mod cell;

pub use cell::{
    AgentBoard, AgentCell, CycleStage, DeliberationOutcome, InternalModeError, SenseOutcome,
    StageTask, StepReport,
};

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Agent names double as routing addresses.
pub type AgentId = String;

/// Structured literal carried by beliefs, goals and message payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Str(String),
    Tuple(Vec<Value>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Tuple(items) => {
                let parts: Vec<String> = items.iter().map(Value::to_string).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Belief {
    pub key: String,
    pub value: Value,
}

/// A directed message. `send_seq` increases per (sender, recipient) pair,
/// which is what makes mailbox FIFO checkable from the outside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    pub recipient: AgentId,
    pub performative: String,
    pub payload: Value,
    pub send_seq: u64,
}

/// What a sense stage hands to the deliberation of the same cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    MessageReceived(Message),
    BeliefUpdated { key: String, value: Value },
    GoalAdded { goal: String, parallel: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    MessageReceived,
    BeliefUpdated,
    GoalAdded,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::MessageReceived(_) => EventKind::MessageReceived,
            Event::BeliefUpdated { .. } => EventKind::BeliefUpdated,
            Event::GoalAdded { .. } => EventKind::GoalAdded,
        }
    }
}

/// Event pattern a plan rule reacts to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    /// A received message with this performative.
    Message { performative: String },
    /// A belief update on this key.
    Belief { key: String },
    /// A goal with this name.
    Goal { name: String },
}

/// Belief-base predicate evaluated after the trigger matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guard {
    Always,
    BeliefIs { key: String, value: Value },
    BeliefExists { key: String },
}

impl Guard {
    pub fn holds(&self, beliefs: &BTreeMap<String, Value>) -> bool {
        match self {
            Guard::Always => true,
            Guard::BeliefIs { key, value } => beliefs.get(key) == Some(value),
            Guard::BeliefExists { key } => beliefs.contains_key(key),
        }
    }
}

/// Where a send action is addressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Agent(AgentId),
    /// The sender bound by the triggering message.
    Sender,
}

/// A literal argument or a variable bound by the rule's trigger.
///
/// Message triggers bind `sender`, `performative` and `payload`; belief
/// triggers bind `key` and `value`; goal triggers bind `goal`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arg {
    Lit(Value),
    Binding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Send {
        to: Target,
        performative: String,
        payload: Arg,
    },
    UpdateBelief {
        key: String,
        value: Arg,
    },
    /// Raises a goal-added event next cycle; `parallel` marks the resulting
    /// intention as deliberately concurrent with its parent.
    AddGoal {
        goal: String,
        parallel: bool,
    },
    /// Emits one trace event carrying the current carrier identity.
    RevealCarrier {
        note: String,
    },
    /// Occupies the current carrier for at least this much CPU time.
    BusySpin {
        duration: Duration,
    },
    Log {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRule {
    pub trigger: Trigger,
    #[serde(default = "default_guard")]
    pub guard: Guard,
    pub body: Vec<Action>,
}

fn default_guard() -> Guard {
    Guard::Always
}

/// A live plan instance: the unexecuted suffix of a rule body plus the
/// bindings captured when the trigger matched.
#[derive(Debug, Clone)]
pub struct Intention {
    pub id: u64,
    pub remaining: std::collections::VecDeque<Action>,
    pub bindings: BTreeMap<String, Value>,
    pub spawned_parallel: bool,
    pub body_len: usize,
}

/// An agent's complete behavior definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: AgentId,
    #[serde(default)]
    pub initial_beliefs: Vec<Belief>,
    pub rules: Vec<PlanRule>,
    #[serde(default)]
    pub initial_goals: Vec<String>,
}

/// How the stages inside one agent's cycle are decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InternalMode {
    /// One sense, one deliberation, one action per cycle, on one carrier.
    Synchronous,
    /// Stages become individually schedulable tasks; per-agent stage order
    /// is preserved by task chaining.
    StagePipelined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalModelConfig {
    pub mode: InternalMode,
    /// Messages drained per sense stage.
    pub max_percepts_per_sense: usize,
    /// Actions executed per act stage; synchronous mode forces 1.
    pub max_actions_per_act: usize,
}

impl Default for InternalModelConfig {
    fn default() -> Self {
        InternalModelConfig {
            mode: InternalMode::Synchronous,
            max_percepts_per_sense: 8,
            max_actions_per_act: 1,
        }
    }
}

impl InternalModelConfig {
    pub fn pipelined() -> Self {
        InternalModelConfig {
            mode: InternalMode::StagePipelined,
            ..Default::default()
        }
    }

    pub fn actions_per_cycle(&self) -> usize {
        match self.mode {
            InternalMode::Synchronous => 1,
            InternalMode::StagePipelined => self.max_actions_per_act.max(1),
        }
    }
}

/// Static checks on a spec: non-empty rule bodies and binding variables that
/// the rule's trigger actually provides.
pub fn validate_spec(spec: &AgentSpec) -> Result<(), SpecError> {
    for (idx, rule) in spec.rules.iter().enumerate() {
        if rule.body.is_empty() {
            return Err(SpecError::EmptyBody {
                agent: spec.name.clone(),
                rule: idx,
            });
        }
        let allowed: &[&str] = match rule.trigger {
            Trigger::Message { .. } => &["sender", "performative", "payload"],
            Trigger::Belief { .. } => &["key", "value"],
            Trigger::Goal { .. } => &["goal"],
        };
        for action in &rule.body {
            let check = |arg: &Arg| -> Result<(), SpecError> {
                if let Arg::Binding(name) = arg {
                    if !allowed.contains(&name.as_str()) {
                        return Err(SpecError::UnboundVariable {
                            agent: spec.name.clone(),
                            rule: idx,
                            variable: name.clone(),
                        });
                    }
                }
                Ok(())
            };
            match action {
                Action::Send { to, payload, .. } => {
                    if matches!(to, Target::Sender)
                        && !matches!(rule.trigger, Trigger::Message { .. })
                    {
                        return Err(SpecError::UnboundVariable {
                            agent: spec.name.clone(),
                            rule: idx,
                            variable: "sender".into(),
                        });
                    }
                    check(payload)?;
                }
                Action::UpdateBelief { value, .. } => check(value)?,
                _ => {}
            }
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("agent `{agent}` rule {rule} has an empty body")]
    EmptyBody { agent: String, rule: usize },
    #[error("agent `{agent}` rule {rule} uses `${variable}` which its trigger does not bind")]
    UnboundVariable {
        agent: String,
        rule: usize,
        variable: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_evaluation() {
        let mut beliefs = BTreeMap::new();
        beliefs.insert("k".to_string(), Value::Int(3));
        assert!(Guard::Always.holds(&beliefs));
        assert!(Guard::BeliefExists { key: "k".into() }.holds(&beliefs));
        assert!(!Guard::BeliefExists { key: "m".into() }.holds(&beliefs));
        assert!(Guard::BeliefIs {
            key: "k".into(),
            value: Value::Int(3)
        }
        .holds(&beliefs));
        assert!(!Guard::BeliefIs {
            key: "k".into(),
            value: Value::Int(4)
        }
        .holds(&beliefs));
    }

    #[test]
    fn validate_rejects_empty_bodies_and_unbound_vars() {
        let spec = AgentSpec {
            name: "a".into(),
            initial_beliefs: vec![],
            rules: vec![PlanRule {
                trigger: Trigger::Goal { name: "g".into() },
                guard: Guard::Always,
                body: vec![],
            }],
            initial_goals: vec![],
        };
        assert!(matches!(
            validate_spec(&spec),
            Err(SpecError::EmptyBody { .. })
        ));

        let spec = AgentSpec {
            name: "a".into(),
            initial_beliefs: vec![],
            rules: vec![PlanRule {
                trigger: Trigger::Goal { name: "g".into() },
                guard: Guard::Always,
                body: vec![Action::Send {
                    to: Target::Sender,
                    performative: "p".into(),
                    payload: Arg::Lit(Value::Int(0)),
                }],
            }],
            initial_goals: vec![],
        };
        assert!(matches!(
            validate_spec(&spec),
            Err(SpecError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn synchronous_mode_forces_one_action_per_cycle() {
        let cfg = InternalModelConfig {
            mode: InternalMode::Synchronous,
            max_percepts_per_sense: 4,
            max_actions_per_act: 5,
        };
        assert_eq!(cfg.actions_per_cycle(), 1);
        let cfg = InternalModelConfig {
            mode: InternalMode::StagePipelined,
            ..cfg
        };
        assert_eq!(cfg.actions_per_cycle(), 5);
    }
}
