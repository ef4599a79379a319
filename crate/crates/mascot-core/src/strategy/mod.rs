//! Execution strategies: how agent control loops map onto carriers.
//!
//! Each concurrency model lives behind the [`ExecutionStrategy`] trait and is
//! registered by name in [`StrategyRegistry`], so a MAS written once runs
//! unchanged under any of them. Selection strings:
//!
//! ```text
//! 1a1t                  one agent, one thread
//! aa1t[:stage|:step]    all agents, one thread, round-robin (default :stage)
//! aa1el                 all agents, one event loop
//! aa1e-fixed:N          all agents, one executor with N carriers
//! aa1e-var:MIN:MAX      all agents, one executor resizing within [MIN,MAX]
//! 1a1p[:PORT]           one agent, one process (loopback transport)
//! ```

pub mod event_loop;
pub mod executor;
pub mod process;
pub mod single_thread;
mod tasks;
pub mod thread_per_agent;

pub use event_loop::{EventLoop, SubmitError, Ticket};
pub use executor::TaskPool;
pub use single_thread::{aa1t_schedule, ScheduleSlot, SchedulePolicy};

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::mas::Mas;
use crate::trace::TraceSink;
use crate::transport::RunStats;

/// How long a carrier-owning strategy parks an idle agent before rechecking.
pub(crate) const IDLE_PARK: Duration = Duration::from_millis(1);

/// Poll interval while waiting for quiescence.
const QUIESCE_POLL: Duration = Duration::from_micros(200);

/// A selected external concurrency model, with its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    OneAgentOneThread,
    AllAgentsOneThread { policy: SchedulePolicy },
    AllAgentsOneEventLoop,
    ExecutorFixed { carriers: usize },
    ExecutorVariable { min: usize, max: usize },
    OneAgentOneProcess { port: u16 },
}

impl StrategyKind {
    /// The canonical selection string for this kind.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::OneAgentOneThread => "1a1t".into(),
            StrategyKind::AllAgentsOneThread { policy } => match policy {
                SchedulePolicy::RoundRobinStage => "aa1t:stage".into(),
                SchedulePolicy::RoundRobinStep => "aa1t:step".into(),
            },
            StrategyKind::AllAgentsOneEventLoop => "aa1el".into(),
            StrategyKind::ExecutorFixed { carriers } => format!("aa1e-fixed:{carriers}"),
            StrategyKind::ExecutorVariable { min, max } => format!("aa1e-var:{min}:{max}"),
            StrategyKind::OneAgentOneProcess { port } => format!("1a1p:{port}"),
        }
    }

    /// Parses a selection string against the standard registry.
    pub fn parse(input: &str) -> Result<StrategyKind, StrategyParseError> {
        StrategyRegistry::standard().parse(input).map(|s| s.kind())
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyParseError {
    #[error("unknown strategy `{0}`")]
    Unknown(String),
    #[error("strategy `{name}`: {msg}")]
    BadParams { name: String, msg: String },
}

#[derive(Debug, thiserror::Error)]
pub enum LaunchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("environment: {0}")]
    Environment(String),
}

/// One concurrency model, ready to map an assembled MAS onto its carriers.
pub trait ExecutionStrategy: Send + Sync {
    fn kind(&self) -> StrategyKind;

    /// Starts every agent under this model. The returned handle controls the
    /// run; the trace sink must accept concurrent appends.
    ///
    /// Implementations call [`ExecutionHandle::new`] with an [`Instant`]
    /// taken at entry: carriers may already be executing while later ones
    /// are still being set up, so run wall time is measured from launch
    /// start.
    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError>;
}

/// Strategy-specific run control behind [`ExecutionHandle`].
pub(crate) trait RunController: Send {
    fn quiesced(&self) -> bool;
    /// Stops all carriers and joins them. Called at most once.
    fn stop(&mut self);
    fn stats(&self) -> RunStats;
    /// Child process ids per agent, for multi-process strategies.
    fn agent_processes(&self) -> Vec<(AgentId, u32)> {
        Vec::new()
    }
    /// Fault injection: forcibly kill an agent's process, if it has one.
    fn kill_agent_process(&mut self, _agent: &str) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuiesceOutcome {
    Quiesced,
    TimedOut,
}

/// Result of driving a run to completion.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: QuiesceOutcome,
    pub stats: RunStats,
    pub wall: Duration,
}

/// Control surface of a launched MAS: await quiescence, stop, read stats.
/// Stopping is idempotent; once `stop` returns, no further trace events are
/// emitted. For multi-process strategies the merged trace is complete only
/// after `stop`.
pub struct ExecutionHandle {
    kind: StrategyKind,
    controller: Box<dyn RunController>,
    started: Instant,
    stopped: bool,
}

impl ExecutionHandle {
    pub(crate) fn new(
        kind: StrategyKind,
        started: Instant,
        controller: Box<dyn RunController>,
    ) -> Self {
        ExecutionHandle {
            kind,
            controller,
            started,
            stopped: false,
        }
    }

    pub fn kind(&self) -> &StrategyKind {
        &self.kind
    }

    pub fn stats(&self) -> RunStats {
        self.controller.stats()
    }

    /// Blocks until the MAS quiesces (all agents idle, mailboxes empty for
    /// the configured streak) or the timeout elapses.
    pub fn await_quiescence(&self, timeout: Duration) -> QuiesceOutcome {
        let deadline = Instant::now() + timeout;
        loop {
            if self.controller.quiesced() {
                return QuiesceOutcome::Quiesced;
            }
            if Instant::now() >= deadline {
                return QuiesceOutcome::TimedOut;
            }
            std::thread::sleep(QUIESCE_POLL);
        }
    }

    /// Stops all carriers; idempotent.
    pub fn stop(&mut self) -> RunStats {
        if !self.stopped {
            self.controller.stop();
            self.stopped = true;
        }
        self.controller.stats()
    }

    /// Awaits quiescence, then stops. The normal way to finish a run.
    pub fn finish(&mut self, timeout: Duration) -> RunOutcome {
        let outcome = self.await_quiescence(timeout);
        let wall = self.started.elapsed();
        let stats = self.stop();
        RunOutcome {
            outcome,
            stats,
            wall,
        }
    }

    pub fn agent_processes(&self) -> Vec<(AgentId, u32)> {
        self.controller.agent_processes()
    }

    /// Fault injection for tests and demos: kill one agent's OS process.
    pub fn kill_agent_process(&mut self, agent: &str) -> bool {
        self.controller.kill_agent_process(agent)
    }
}

impl Drop for ExecutionHandle {
    fn drop(&mut self) {
        if !self.stopped {
            self.controller.stop();
            self.stopped = true;
        }
    }
}

type BuildFn = fn(Option<&str>) -> Result<Box<dyn ExecutionStrategy>, StrategyParseError>;

/// One registered strategy: its selection name, parameter syntax and builder.
pub struct StrategyEntry {
    pub name: &'static str,
    pub syntax: &'static str,
    pub summary: &'static str,
    build: BuildFn,
}

/// Name-indexed registry of the available execution strategies.
pub struct StrategyRegistry {
    entries: Vec<StrategyEntry>,
}

impl StrategyRegistry {
    /// The six standard concurrency models.
    pub fn standard() -> Self {
        StrategyRegistry {
            entries: vec![
                StrategyEntry {
                    name: "1a1t",
                    syntax: "1a1t",
                    summary: "one dedicated OS thread per agent",
                    build: |params| {
                        expect_no_params("1a1t", params)?;
                        Ok(Box::new(thread_per_agent::OneAgentOneThread))
                    },
                },
                StrategyEntry {
                    name: "aa1t",
                    syntax: "aa1t[:stage|:step]",
                    summary: "all agents cooperatively scheduled on one thread",
                    build: |params| {
                        let policy = match params {
                            None | Some("stage") => SchedulePolicy::RoundRobinStage,
                            Some("step") => SchedulePolicy::RoundRobinStep,
                            Some(other) => {
                                return Err(StrategyParseError::BadParams {
                                    name: "aa1t".into(),
                                    msg: format!("unknown policy `{other}`"),
                                })
                            }
                        };
                        Ok(Box::new(single_thread::AllAgentsOneThread { policy }))
                    },
                },
                StrategyEntry {
                    name: "aa1el",
                    syntax: "aa1el",
                    summary: "all agents as tasks on one FIFO event loop",
                    build: |params| {
                        expect_no_params("aa1el", params)?;
                        Ok(Box::new(event_loop::AllAgentsOneEventLoop))
                    },
                },
                StrategyEntry {
                    name: "aa1e-fixed",
                    syntax: "aa1e-fixed:N",
                    summary: "all agents as tasks on a fixed-size executor",
                    build: |params| {
                        let carriers = parse_count("aa1e-fixed", params)?;
                        Ok(Box::new(executor::ExecutorFixed { carriers }))
                    },
                },
                StrategyEntry {
                    name: "aa1e-var",
                    syntax: "aa1e-var:MIN:MAX",
                    summary: "all agents as tasks on a variable-size executor",
                    build: |params| {
                        let raw = params.unwrap_or("");
                        let parts: Vec<&str> = raw.split(':').collect();
                        let bad = |msg: &str| StrategyParseError::BadParams {
                            name: "aa1e-var".into(),
                            msg: msg.into(),
                        };
                        if parts.len() != 2 {
                            return Err(bad("expected MIN:MAX"));
                        }
                        let min = parts[0].parse().map_err(|_| bad("MIN must be a count"))?;
                        let max = parts[1].parse().map_err(|_| bad("MAX must be a count"))?;
                        Ok(Box::new(executor::ExecutorVariable { min, max }))
                    },
                },
                StrategyEntry {
                    name: "1a1p",
                    syntax: "1a1p[:PORT]",
                    summary: "one child process per agent over a loopback stream",
                    build: |params| {
                        let port = match params {
                            None => 0,
                            Some(raw) => raw.parse().map_err(|_| StrategyParseError::BadParams {
                                name: "1a1p".into(),
                                msg: "PORT must be a u16".into(),
                            })?,
                        };
                        Ok(Box::new(process::OneAgentOneProcess::new(port)))
                    },
                },
            ],
        }
    }

    pub fn entries(&self) -> &[StrategyEntry] {
        &self.entries
    }

    /// Parses `name[:params]` into a ready strategy.
    pub fn parse(&self, input: &str) -> Result<Box<dyn ExecutionStrategy>, StrategyParseError> {
        let (name, params) = match input.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (input, None),
        };
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| StrategyParseError::Unknown(input.to_string()))?;
        (entry.build)(params)
    }
}

fn expect_no_params(name: &str, params: Option<&str>) -> Result<(), StrategyParseError> {
    match params {
        None => Ok(()),
        Some(p) => Err(StrategyParseError::BadParams {
            name: name.into(),
            msg: format!("unexpected parameter `{p}`"),
        }),
    }
}

fn parse_count(name: &str, params: Option<&str>) -> Result<usize, StrategyParseError> {
    params
        .ok_or_else(|| StrategyParseError::BadParams {
            name: name.into(),
            msg: "missing count".into(),
        })?
        .parse()
        .map_err(|_| StrategyParseError::BadParams {
            name: name.into(),
            msg: "count must be an integer".into(),
        })
}

/// Parses a strategy string and launches the MAS under it.
pub fn launch(
    mas: Mas,
    strategy: &str,
    sink: Arc<TraceSink>,
) -> Result<ExecutionHandle, LaunchError> {
    let strategy = StrategyRegistry::standard()
        .parse(strategy)
        .map_err(|e| LaunchError::Config(e.to_string()))?;
    strategy.launch(mas, sink)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_strings_round_trip() {
        for label in [
            "1a1t",
            "aa1t:stage",
            "aa1t:step",
            "aa1el",
            "aa1e-fixed:4",
            "aa1e-var:1:8",
            "1a1p:0",
        ] {
            let kind = StrategyKind::parse(label).unwrap();
            assert_eq!(kind.label(), label);
        }
        // Bare aa1t defaults to stage-level round-robin; bare 1a1p to an
        // ephemeral port.
        assert_eq!(
            StrategyKind::parse("aa1t").unwrap(),
            StrategyKind::AllAgentsOneThread {
                policy: SchedulePolicy::RoundRobinStage
            }
        );
        assert_eq!(
            StrategyKind::parse("1a1p").unwrap(),
            StrategyKind::OneAgentOneProcess { port: 0 }
        );
    }

    #[test]
    fn unknown_and_malformed_strategies_are_rejected() {
        assert!(matches!(
            StrategyKind::parse("bogus"),
            Err(StrategyParseError::Unknown(_))
        ));
        assert!(matches!(
            StrategyKind::parse("aa1e-fixed"),
            Err(StrategyParseError::BadParams { .. })
        ));
        assert!(matches!(
            StrategyKind::parse("aa1e-var:3"),
            Err(StrategyParseError::BadParams { .. })
        ));
        assert!(matches!(
            StrategyKind::parse("aa1t:weird"),
            Err(StrategyParseError::BadParams { .. })
        ));
    }

    #[test]
    fn registry_lists_six_models() {
        assert_eq!(StrategyRegistry::standard().entries().len(), 6);
    }
}
