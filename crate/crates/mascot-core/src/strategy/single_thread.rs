//! All-Agents-One-Thread: one carrier cooperatively schedules every agent
//! with a round-robin policy, either stage by stage or whole step by whole
//! step. Single control flow means reproducible interleavings, at the price
//! of any blocking action stalling the whole MAS.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::{ExecutionHandle, ExecutionStrategy, LaunchError, RunController, StrategyKind, IDLE_PARK};
use crate::agent::{AgentId, CycleStage};
use crate::mas::{Mas, RunMonitor};
use crate::trace::TraceSink;
use crate::transport::RunStats;

/// Granularity at which the single thread alternates between agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePolicy {
    /// sense_1..sense_N, deliberate_1..deliberate_N, act_1..act_N, repeat.
    RoundRobinStage,
    /// step_1..step_N, repeat.
    RoundRobinStep,
}

/// One scheduled unit for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleSlot {
    Sense,
    Deliberate,
    Act,
    Step,
}

/// One full round of the schedule as (agent index, slot) pairs.
pub(crate) fn round_slots(agents: usize, policy: SchedulePolicy) -> Vec<(usize, ScheduleSlot)> {
    let mut slots = Vec::new();
    match policy {
        SchedulePolicy::RoundRobinStage => {
            for slot in [ScheduleSlot::Sense, ScheduleSlot::Deliberate, ScheduleSlot::Act] {
                for agent in 0..agents {
                    slots.push((agent, slot));
                }
            }
        }
        SchedulePolicy::RoundRobinStep => {
            for agent in 0..agents {
                slots.push((agent, ScheduleSlot::Step));
            }
        }
    }
    slots
}

/// The lazy schedule the single-thread runner follows: agents in their
/// canonical order, repeated round after round. An empty agent list yields
/// an empty schedule.
pub fn aa1t_schedule(
    order: &[AgentId],
    policy: SchedulePolicy,
) -> impl Iterator<Item = (AgentId, ScheduleSlot)> + '_ {
    let round = round_slots(order.len(), policy);
    let mut at = 0;
    std::iter::from_fn(move || {
        if round.is_empty() {
            return None;
        }
        let (idx, slot) = round[at % round.len()];
        at += 1;
        Some((order[idx].clone(), slot))
    })
}

pub struct AllAgentsOneThread {
    pub policy: SchedulePolicy,
}

impl ExecutionStrategy for AllAgentsOneThread {
    fn kind(&self) -> StrategyKind {
        StrategyKind::AllAgentsOneThread {
            policy: self.policy,
        }
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = std::time::Instant::now();
        let stop = Arc::new(AtomicBool::new(false));
        let monitor = Arc::clone(&mas.monitor);
        monitor.stats().raise_carrier_high_water(1);
        let policy = self.policy;
        let transport = Arc::clone(&mas.transport);
        let stats = Arc::clone(monitor.stats());
        let mut harnesses = mas.agents;
        let stop_flag = Arc::clone(&stop);
        let join = std::thread::Builder::new()
            .name("mas-carrier".into())
            .spawn(move || {
                let round = round_slots(harnesses.len(), policy);
                'run: loop {
                    if stop_flag.load(Ordering::Relaxed) {
                        break;
                    }
                    let mut any_productive = false;
                    for &(idx, slot) in &round {
                        if stop_flag.load(Ordering::Relaxed) {
                            break 'run;
                        }
                        let harness = &mut harnesses[idx];
                        match slot {
                            ScheduleSlot::Sense => {
                                let outcome = harness.cell.sense(&harness.mailbox, &sink);
                                if outcome.productive {
                                    any_productive = true;
                                    stats.count_tasks(1);
                                }
                            }
                            ScheduleSlot::Deliberate => {
                                if harness.cell.pending_stage() == CycleStage::Deliberate {
                                    harness.cell.deliberate(&sink);
                                }
                            }
                            ScheduleSlot::Act => {
                                if harness.cell.pending_stage() == CycleStage::Act {
                                    harness.cell.act(transport.as_ref(), &sink);
                                }
                            }
                            ScheduleSlot::Step => {
                                let report =
                                    harness.cell.step(&harness.mailbox, transport.as_ref(), &sink);
                                if !report.idle {
                                    any_productive = true;
                                    stats.count_tasks(1);
                                }
                            }
                        }
                    }
                    if round.is_empty() {
                        break;
                    }
                    if !any_productive {
                        std::thread::sleep(IDLE_PARK);
                    }
                }
            })
            .map_err(|e| LaunchError::Environment(format!("thread spawn: {e}")))?;
        Ok(ExecutionHandle::new(
            self.kind(),
            started,
            Box::new(SingleThreadRun {
                monitor,
                stop,
                join: Some(join),
            }),
        ))
    }
}

struct SingleThreadRun {
    monitor: Arc<RunMonitor>,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl RunController for SingleThreadRun {
    fn quiesced(&self) -> bool {
        self.monitor.idle_quiesced()
    }

    fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }

    fn stats(&self) -> RunStats {
        self.monitor.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<AgentId> {
        (0..n).map(|i| format!("{}", (b'A' + i as u8) as char)).collect()
    }

    #[test]
    fn stage_policy_walks_all_senses_then_deliberates_then_acts() {
        let order = names(2);
        let first: Vec<_> = aa1t_schedule(&order, SchedulePolicy::RoundRobinStage)
            .take(6)
            .collect();
        assert_eq!(
            first,
            vec![
                ("A".to_string(), ScheduleSlot::Sense),
                ("B".to_string(), ScheduleSlot::Sense),
                ("A".to_string(), ScheduleSlot::Deliberate),
                ("B".to_string(), ScheduleSlot::Deliberate),
                ("A".to_string(), ScheduleSlot::Act),
                ("B".to_string(), ScheduleSlot::Act),
            ]
        );
    }

    #[test]
    fn step_policy_cycles_whole_steps() {
        let order = names(3);
        let first: Vec<_> = aa1t_schedule(&order, SchedulePolicy::RoundRobinStep)
            .take(6)
            .map(|(a, _)| a)
            .collect();
        assert_eq!(first, vec!["A", "B", "C", "A", "B", "C"]);
    }

    #[test]
    fn single_agent_keeps_its_stage_order() {
        let order = names(1);
        let first: Vec<_> = aa1t_schedule(&order, SchedulePolicy::RoundRobinStage)
            .take(4)
            .map(|(_, s)| s)
            .collect();
        assert_eq!(
            first,
            vec![
                ScheduleSlot::Sense,
                ScheduleSlot::Deliberate,
                ScheduleSlot::Act,
                ScheduleSlot::Sense
            ]
        );
    }

    #[test]
    fn empty_agent_list_yields_an_empty_schedule() {
        let order: Vec<AgentId> = vec![];
        assert_eq!(
            aa1t_schedule(&order, SchedulePolicy::RoundRobinStage).next(),
            None
        );
    }
}
