//! MAS assembly: turning a set of agent specs into cells, mailboxes and a
//! transport, without starting any carrier.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::{
    validate_spec, AgentBoard, AgentCell, AgentId, AgentSpec, InternalModelConfig, SpecError,
};
use crate::mailbox::Mailbox;
use crate::transport::{InMemoryTransport, RunStats, StatsCollector};

/// When a run counts as finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuiescencePolicy {
    /// Consecutive idle cycles per agent before it counts as settled.
    pub idle_cycles: u64,
    /// Wall-clock budget for reaching quiescence.
    pub wall_timeout: Duration,
}

impl Default for QuiescencePolicy {
    fn default() -> Self {
        QuiescencePolicy {
            idle_cycles: 3,
            wall_timeout: Duration::from_secs(10),
        }
    }
}

/// Everything needed to run a MAS except the choice of execution strategy.
///
/// The agent list order is canonical: single-thread round-robin scheduling
/// walks agents in exactly this order. The seed determines every
/// runtime-internal choice (such as initial task placement), which is what
/// makes single-flow strategies reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasConfig {
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub internal: InternalModelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quiescence: QuiescencePolicy,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("duplicate agent name `{0}`")]
    DuplicateAgent(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("internal model: {0}")]
    InvalidInternal(String),
}

/// One agent ready to be owned by a strategy carrier.
pub struct AgentHarness {
    pub cell: AgentCell,
    pub mailbox: Arc<Mailbox>,
    pub board: Arc<AgentBoard>,
}

/// An assembled MAS: validated specs, mailboxes and transport created, no
/// carrier started yet.
pub struct Mas {
    pub config: MasConfig,
    pub agents: Vec<AgentHarness>,
    pub transport: Arc<InMemoryTransport>,
    pub monitor: Arc<RunMonitor>,
}

/// Shared view of run progress used for quiescence detection and final
/// statistics.
pub struct RunMonitor {
    agents: Vec<(AgentId, Arc<AgentBoard>)>,
    mailboxes: Vec<(AgentId, Arc<Mailbox>)>,
    stats: Arc<StatsCollector>,
    policy: QuiescencePolicy,
}

impl RunMonitor {
    pub fn stats(&self) -> &Arc<StatsCollector> {
        &self.stats
    }

    pub fn policy(&self) -> QuiescencePolicy {
        self.policy
    }

    pub fn mailboxes_empty(&self) -> bool {
        self.mailboxes.iter().all(|(_, mb)| mb.is_empty())
    }

    /// Quiescence for carrier-owning strategies: every agent has been idle
    /// for the configured streak (or failed) and no message is waiting.
    pub fn idle_quiesced(&self) -> bool {
        self.mailboxes_empty()
            && self
                .agents
                .iter()
                .all(|(_, b)| b.failed() || b.idle_streak() >= self.policy.idle_cycles)
    }

    /// Folds per-agent board counters into the final stats snapshot.
    pub fn snapshot(&self) -> RunStats {
        let mut stats = self.stats.snapshot();
        stats.tasks_executed = stats
            .tasks_executed
            .max(self.agents.iter().map(|(_, b)| b.cycles()).sum());
        stats
    }
}

/// Validates the configuration and builds mailboxes, transport and cells.
pub fn assemble(config: MasConfig) -> Result<Mas, ConfigError> {
    if config.internal.max_percepts_per_sense < 1 {
        return Err(ConfigError::InvalidInternal(
            "max_percepts_per_sense must be >= 1".into(),
        ));
    }
    if config.internal.max_actions_per_act < 1 {
        return Err(ConfigError::InvalidInternal(
            "max_actions_per_act must be >= 1".into(),
        ));
    }
    let mut seen = BTreeMap::new();
    for spec in &config.agents {
        if seen.insert(spec.name.clone(), ()).is_some() {
            return Err(ConfigError::DuplicateAgent(spec.name.clone()));
        }
        validate_spec(spec)?;
    }

    let stats = Arc::new(StatsCollector::new());
    let mut agents = Vec::with_capacity(config.agents.len());
    let mut routes = BTreeMap::new();
    let mut boards = Vec::new();
    let mut mailboxes = Vec::new();
    for spec in &config.agents {
        let mailbox = Arc::new(Mailbox::new());
        let board = Arc::new(AgentBoard::default());
        routes.insert(spec.name.clone(), Arc::clone(&mailbox));
        boards.push((spec.name.clone(), Arc::clone(&board)));
        mailboxes.push((spec.name.clone(), Arc::clone(&mailbox)));
        agents.push(AgentHarness {
            cell: AgentCell::new(spec, config.internal, Arc::clone(&board), Arc::clone(&stats)),
            mailbox,
            board,
        });
    }
    let transport = Arc::new(InMemoryTransport::new(routes, Arc::clone(&stats)));
    let monitor = Arc::new(RunMonitor {
        agents: boards,
        mailboxes,
        stats,
        policy: config.quiescence,
    });
    Ok(Mas {
        config,
        agents,
        transport,
        monitor,
    })
}
