//! Pure analyses over loaded traces: program-order checking, logical
//! projection and comparison, observable concurrency-class inference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Stage, TraceEvent};
use crate::strategy::StrategyKind;

/// One program-order violation found in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub agent: String,
    pub cycle: Option<u64>,
    pub intention: Option<u64>,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceFormatError {
    #[error("event seq {seq}: action detail `{detail}` lacks the `a<idx>` prefix")]
    BadActionDetail { seq: u64, detail: String },
}

fn action_index(event: &TraceEvent) -> Result<usize, TraceFormatError> {
    let rest = event
        .detail
        .strip_prefix('a')
        .and_then(|r| r.split_whitespace().next());
    rest.and_then(|tok| tok.parse::<usize>().ok())
        .ok_or_else(|| TraceFormatError::BadActionDetail {
            seq: event.seq,
            detail: event.detail.clone(),
        })
}

/// Checks that every agent's trace respects the control loop:
///
/// - per (agent, cycle): sense events precede deliberate events precede
///   act/reveal events, in per-process seq order;
/// - per (agent, intention): action events appear in body order.
///
/// Returns the (possibly empty) list of violations. Events of one agent are
/// compared within their process only, so merged multi-process traces check
/// exactly where exactness is available.
pub fn check_program_order(events: &[TraceEvent]) -> Result<Vec<Violation>, TraceFormatError> {
    let mut violations = Vec::new();
    let mut per_agent: BTreeMap<(String, u32), Vec<&TraceEvent>> = BTreeMap::new();
    for event in events {
        per_agent
            .entry((event.agent.clone(), event.process))
            .or_default()
            .push(event);
    }
    for ((agent, _process), mut agent_events) in per_agent {
        agent_events.sort_by_key(|e| e.seq);

        // Stage order within each cycle.
        let mut last_rank: BTreeMap<u64, (u8, Stage)> = BTreeMap::new();
        for event in &agent_events {
            let rank = match event.stage {
                Stage::Sense => 0u8,
                Stage::Deliberate => 1,
                Stage::Act | Stage::Reveal => 2,
            };
            if let Some(&(prev_rank, prev_stage)) = last_rank.get(&event.cycle) {
                if rank < prev_rank {
                    violations.push(Violation {
                        agent: agent.clone(),
                        cycle: Some(event.cycle),
                        intention: event.intention,
                        message: format!(
                            "{} at seq {} after {} in cycle {}",
                            event.stage, event.seq, prev_stage, event.cycle
                        ),
                    });
                }
            }
            let entry = last_rank.entry(event.cycle).or_insert((rank, event.stage));
            if rank >= entry.0 {
                *entry = (rank, event.stage);
            }
        }

        // Body order within each intention.
        let mut last_index: BTreeMap<u64, usize> = BTreeMap::new();
        for event in &agent_events {
            if !matches!(event.stage, Stage::Act | Stage::Reveal) {
                continue;
            }
            let Some(intention) = event.intention else {
                continue;
            };
            let idx = action_index(event)?;
            if let Some(&prev) = last_index.get(&intention) {
                if idx <= prev {
                    violations.push(Violation {
                        agent: agent.clone(),
                        cycle: Some(event.cycle),
                        intention: Some(intention),
                        message: format!(
                            "action a{idx} at seq {} does not follow a{prev} in body order",
                            event.seq
                        ),
                    });
                }
            }
            last_index.insert(intention, idx);
        }
    }
    Ok(violations)
}

/// A trace event with timestamps dropped and carriers renamed to
/// first-appearance indices; the unit of cross-run comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalEvent {
    pub agent: String,
    pub cycle: u64,
    pub stage: Stage,
    pub intention: Option<u64>,
    pub carrier: u64,
    pub detail: String,
}

/// Projects a trace onto its logical content. Deterministic: equal input
/// sequences yield equal projections, and renaming raw carrier ids cannot
/// change the result.
pub fn logical_trace(events: &[TraceEvent]) -> Vec<LogicalEvent> {
    let mut rename: BTreeMap<(u32, u64), u64> = BTreeMap::new();
    let mut out = Vec::with_capacity(events.len());
    for event in events {
        let next = rename.len() as u64;
        let carrier = *rename.entry((event.process, event.carrier)).or_insert(next);
        out.push(LogicalEvent {
            agent: event.agent.clone(),
            cycle: event.cycle,
            stage: event.stage,
            intention: event.intention,
            carrier,
            detail: event.detail.clone(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffOutcome {
    Identical,
    DivergesAt {
        index: usize,
        left: Option<LogicalEvent>,
        right: Option<LogicalEvent>,
    },
}

/// Compares the logical projections of two traces, reporting the first
/// differing position.
pub fn logical_diff(a: &[TraceEvent], b: &[TraceEvent]) -> DiffOutcome {
    let la = logical_trace(a);
    let lb = logical_trace(b);
    for (index, (x, y)) in la.iter().zip(lb.iter()).enumerate() {
        if x != y {
            return DiffOutcome::DivergesAt {
                index,
                left: Some(x.clone()),
                right: Some(y.clone()),
            };
        }
    }
    if la.len() != lb.len() {
        let index = la.len().min(lb.len());
        return DiffOutcome::DivergesAt {
            index,
            left: la.get(index).cloned(),
            right: lb.get(index).cloned(),
        };
    }
    DiffOutcome::Identical
}

/// Merges per-process traces into one, ordered by `(wall_ns, process, seq)`.
/// The tie-break keeps per-process seq order exact; cross-process ordering is
/// only as good as the wall clocks.
pub fn merge_traces<I: IntoIterator<Item = Vec<TraceEvent>>>(parts: I) -> Vec<TraceEvent> {
    let mut all: Vec<TraceEvent> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        (a.wall_ns, a.process, a.seq).cmp(&(b.wall_ns, b.process, b.seq))
    });
    all
}

/// The concurrency shape observable from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableClass {
    /// Carrier/agent incidence is a bijection.
    PerAgentFlow,
    /// Exactly one carrier appears in the whole trace.
    SingleFlow,
    /// Several carriers with sharing; the bound is the distinct carrier count.
    Pooled { carriers: usize },
    /// More than one OS process id appears.
    MultiProcess { processes: usize },
}

impl fmt::Display for ObservableClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableClass::PerAgentFlow => write!(f, "PER_AGENT_FLOW"),
            ObservableClass::SingleFlow => write!(f, "SINGLE_FLOW"),
            ObservableClass::Pooled { carriers } => write!(f, "POOLED(<={carriers})"),
            ObservableClass::MultiProcess { processes } => {
                write!(f, "MULTI_PROCESS({processes})")
            }
        }
    }
}

/// A strategy shape compatible with an observed class. Executor entries carry
/// the minimum capacity the observation requires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompatibleStrategy {
    OneAgentOneThread,
    AllAgentsOneThread,
    AllAgentsOneEventLoop,
    ExecutorFixed { min_carriers: usize },
    ExecutorVariable { min_capacity: usize },
    OneAgentOneProcess,
}

impl CompatibleStrategy {
    /// Whether a concrete strategy selection falls under this entry.
    pub fn matches(&self, kind: &StrategyKind) -> bool {
        match (self, kind) {
            (CompatibleStrategy::OneAgentOneThread, StrategyKind::OneAgentOneThread) => true,
            (CompatibleStrategy::AllAgentsOneThread, StrategyKind::AllAgentsOneThread { .. }) => {
                true
            }
            (CompatibleStrategy::AllAgentsOneEventLoop, StrategyKind::AllAgentsOneEventLoop) => {
                true
            }
            (
                CompatibleStrategy::ExecutorFixed { min_carriers },
                StrategyKind::ExecutorFixed { carriers },
            ) => carriers >= min_carriers,
            (
                CompatibleStrategy::ExecutorVariable { min_capacity },
                StrategyKind::ExecutorVariable { max, .. },
            ) => max >= min_capacity,
            (CompatibleStrategy::OneAgentOneProcess, StrategyKind::OneAgentOneProcess { .. }) => {
                true
            }
            _ => false,
        }
    }
}

impl fmt::Display for CompatibleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompatibleStrategy::OneAgentOneThread => write!(f, "1a1t"),
            CompatibleStrategy::AllAgentsOneThread => write!(f, "aa1t"),
            CompatibleStrategy::AllAgentsOneEventLoop => write!(f, "aa1el"),
            CompatibleStrategy::ExecutorFixed { min_carriers } => {
                write!(f, "aa1e-fixed(N>={min_carriers})")
            }
            CompatibleStrategy::ExecutorVariable { min_capacity } => {
                write!(f, "aa1e-var(max>={min_capacity})")
            }
            CompatibleStrategy::OneAgentOneProcess => write!(f, "1a1p"),
        }
    }
}

/// Carrier/agent incidence statistics backing a classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub events: usize,
    pub agents: usize,
    pub carriers: usize,
    pub processes: usize,
    /// Distinct carriers used per agent.
    pub carriers_per_agent: BTreeMap<String, usize>,
    /// Carriers that executed stages of more than one agent.
    pub shared_carriers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub observable_class: ObservableClass,
    pub evidence: Evidence,
    pub compatible_strategies: Vec<CompatibleStrategy>,
}

impl ClassificationReport {
    pub fn permits(&self, kind: &StrategyKind) -> bool {
        self.compatible_strategies.iter().any(|c| c.matches(kind))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("cannot classify an empty trace")]
    EmptyTrace,
}

/// Infers the observable concurrency class from carrier/agent incidence.
///
/// Classes are deliberately coarser than exact strategies: several strategies
/// can produce the same observable behavior, so the report carries every
/// strategy shape that could have produced the run. The ground-truth strategy
/// of the producing run is always in that set.
pub fn classify(events: &[TraceEvent]) -> Result<ClassificationReport, ClassifyError> {
    if events.is_empty() {
        return Err(ClassifyError::EmptyTrace);
    }
    let mut agents: BTreeSet<&str> = BTreeSet::new();
    let mut carriers: BTreeSet<(u32, u64)> = BTreeSet::new();
    let mut processes: BTreeSet<u32> = BTreeSet::new();
    let mut agent_carriers: BTreeMap<&str, BTreeSet<(u32, u64)>> = BTreeMap::new();
    let mut carrier_agents: BTreeMap<(u32, u64), BTreeSet<&str>> = BTreeMap::new();
    for event in events {
        let carrier = (event.process, event.carrier);
        agents.insert(&event.agent);
        carriers.insert(carrier);
        processes.insert(event.process);
        agent_carriers.entry(&event.agent).or_default().insert(carrier);
        carrier_agents.entry(carrier).or_default().insert(&event.agent);
    }
    let n = agents.len();
    let c = carriers.len();
    let p = processes.len();
    let bijection = agent_carriers.values().all(|s| s.len() == 1)
        && carrier_agents.values().all(|s| s.len() == 1);
    let evidence = Evidence {
        events: events.len(),
        agents: n,
        carriers: c,
        processes: p,
        carriers_per_agent: agent_carriers
            .iter()
            .map(|(a, s)| (a.to_string(), s.len()))
            .collect(),
        shared_carriers: carrier_agents.values().filter(|s| s.len() > 1).count(),
    };

    let (observable_class, compatible_strategies) = if p > 1 {
        (
            ObservableClass::MultiProcess { processes: p },
            vec![CompatibleStrategy::OneAgentOneProcess],
        )
    } else if c == 1 {
        let mut compat = vec![
            CompatibleStrategy::AllAgentsOneThread,
            CompatibleStrategy::AllAgentsOneEventLoop,
            CompatibleStrategy::ExecutorFixed { min_carriers: 1 },
            CompatibleStrategy::ExecutorVariable { min_capacity: 1 },
        ];
        if n <= 1 {
            // A lone agent shows one carrier under per-agent strategies too.
            compat.push(CompatibleStrategy::OneAgentOneThread);
            compat.push(CompatibleStrategy::OneAgentOneProcess);
        }
        (ObservableClass::SingleFlow, compat)
    } else if bijection {
        (
            ObservableClass::PerAgentFlow,
            vec![
                CompatibleStrategy::OneAgentOneThread,
                CompatibleStrategy::ExecutorFixed { min_carriers: c },
                CompatibleStrategy::ExecutorVariable { min_capacity: c },
            ],
        )
    } else {
        (
            ObservableClass::Pooled { carriers: c },
            vec![
                CompatibleStrategy::ExecutorFixed { min_carriers: c },
                CompatibleStrategy::ExecutorVariable { min_capacity: c },
            ],
        )
    };

    Ok(ClassificationReport {
        observable_class,
        evidence,
        compatible_strategies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::too_many_arguments)]
    fn event(
        seq: u64,
        agent: &str,
        cycle: u64,
        stage: Stage,
        intention: Option<u64>,
        carrier: u64,
        process: u32,
        detail: &str,
    ) -> TraceEvent {
        TraceEvent {
            seq,
            wall_ns: seq * 100,
            agent: agent.into(),
            cycle,
            stage,
            intention,
            carrier,
            process,
            detail: detail.into(),
        }
    }

    fn well_formed_cycle(agent: &str, carrier: u64, base: u64) -> Vec<TraceEvent> {
        vec![
            event(base, agent, 1, Stage::Sense, None, carrier, 7, "sensed=1"),
            event(
                base + 1,
                agent,
                1,
                Stage::Deliberate,
                Some(1),
                carrier,
                7,
                "spawned=1 selected=1",
            ),
            event(
                base + 2,
                agent,
                1,
                Stage::Act,
                Some(1),
                carrier,
                7,
                "a0 log x",
            ),
        ]
    }

    #[test]
    fn empty_trace_has_no_violations() {
        assert!(check_program_order(&[]).unwrap().is_empty());
    }

    #[test]
    fn well_formed_trace_passes() {
        let trace = well_formed_cycle("a", 1, 1);
        assert!(check_program_order(&trace).unwrap().is_empty());
    }

    #[test]
    fn act_before_sense_is_one_violation() {
        // Forge: an act whose seq precedes its cycle's sense.
        let trace = vec![
            event(1, "a", 1, Stage::Act, Some(1), 1, 7, "a0 log x"),
            event(2, "a", 1, Stage::Sense, None, 1, 7, "sensed=1"),
        ];
        let violations = check_program_order(&trace).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].cycle, Some(1));
    }

    #[test]
    fn body_order_regression_is_caught() {
        let mut trace = well_formed_cycle("a", 1, 1);
        trace.push(event(
            4,
            "a",
            2,
            Stage::Sense,
            None,
            1,
            7,
            "sensed=0",
        ));
        trace.push(event(
            5,
            "a",
            2,
            Stage::Act,
            Some(1),
            1,
            7,
            "a0 log again",
        ));
        let violations = check_program_order(&trace).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].intention, Some(1));
    }

    #[test]
    fn unparseable_action_detail_is_a_format_error() {
        let trace = vec![event(
            1,
            "a",
            1,
            Stage::Act,
            Some(1),
            1,
            7,
            "send without index",
        )];
        assert!(matches!(
            check_program_order(&trace),
            Err(TraceFormatError::BadActionDetail { seq: 1, .. })
        ));
    }

    #[test]
    fn classification_of_the_four_shapes() {
        // Two agents, two carriers, bijection.
        let mut t = well_formed_cycle("a", 1, 1);
        t.extend(well_formed_cycle("b", 2, 10));
        let report = classify(&t).unwrap();
        assert_eq!(report.observable_class, ObservableClass::PerAgentFlow);
        assert!(report.permits(&StrategyKind::OneAgentOneThread));
        assert!(report.permits(&StrategyKind::ExecutorFixed { carriers: 4 }));
        assert!(!report.permits(&StrategyKind::AllAgentsOneEventLoop));

        // One carrier overall.
        let mut t = well_formed_cycle("a", 3, 1);
        t.extend(well_formed_cycle("b", 3, 10));
        let report = classify(&t).unwrap();
        assert_eq!(report.observable_class, ObservableClass::SingleFlow);
        assert!(report.permits(&StrategyKind::AllAgentsOneEventLoop));
        assert!(report.permits(&StrategyKind::ExecutorFixed { carriers: 1 }));
        assert!(!report.permits(&StrategyKind::OneAgentOneThread));

        // Sharing without bijection.
        let mut t = well_formed_cycle("a", 1, 1);
        t.extend(well_formed_cycle("b", 1, 10));
        t.extend(well_formed_cycle("b", 2, 20));
        let report = classify(&t).unwrap();
        assert_eq!(
            report.observable_class,
            ObservableClass::Pooled { carriers: 2 }
        );
        assert!(report.permits(&StrategyKind::ExecutorFixed { carriers: 2 }));
        assert!(!report.permits(&StrategyKind::ExecutorFixed { carriers: 1 }));

        // Two processes.
        let mut t = well_formed_cycle("a", 1, 1);
        let mut other = well_formed_cycle("b", 1, 1);
        for e in &mut other {
            e.process = 8;
        }
        t.extend(other);
        let report = classify(&t).unwrap();
        assert_eq!(
            report.observable_class,
            ObservableClass::MultiProcess { processes: 2 }
        );
        assert!(report.permits(&StrategyKind::OneAgentOneProcess { port: 0 }));
    }

    #[test]
    fn empty_trace_cannot_be_classified() {
        assert!(matches!(classify(&[]), Err(ClassifyError::EmptyTrace)));
    }

    #[test]
    fn logical_projection_is_carrier_renaming_invariant() {
        let base = well_formed_cycle("a", 17, 1);
        let mut renamed = base.clone();
        for e in &mut renamed {
            e.carrier = 99;
            e.wall_ns += 5;
        }
        assert_eq!(logical_trace(&base), logical_trace(&renamed));
        assert_eq!(logical_diff(&base, &renamed), DiffOutcome::Identical);
    }

    #[test]
    fn logical_diff_reports_first_divergence() {
        let a = well_formed_cycle("a", 1, 1);
        let mut b = a.clone();
        b[2].detail = "a0 log y".into();
        match logical_diff(&a, &b) {
            DiffOutcome::DivergesAt { index: 2, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
        let shorter = &a[..2];
        match logical_diff(&a, shorter) {
            DiffOutcome::DivergesAt { index: 2, right: None, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn merge_orders_by_wall_then_process_then_seq() {
        let mut p1 = well_formed_cycle("a", 1, 1);
        let mut p2 = well_formed_cycle("b", 1, 1);
        for e in &mut p1 {
            e.process = 10;
        }
        for e in &mut p2 {
            e.process = 4;
            e.wall_ns = e.seq * 100; // identical wall stamps as p1
        }
        let merged = merge_traces([p1, p2]);
        assert_eq!(merged.len(), 6);
        let keys: Vec<_> = merged.iter().map(|e| (e.wall_ns, e.process, e.seq)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
