//! End-to-end runs of the in-process execution strategies against the
//! bundled benchmarks.

use std::sync::Arc;
use std::time::Duration;

use mascot_core::agent::{Action, AgentSpec, Guard, PlanRule, Trigger};
use mascot_core::mas::{assemble, MasConfig, QuiescencePolicy};
use mascot_core::strategy::{launch, QuiesceOutcome};
use mascot_core::trace::{
    check_program_order, classify, logical_diff, DiffOutcome, ObservableClass, Stage,
};
use mascot_core::transport::RunStats;
use mascot_core::{specs, StrategyKind, TraceEvent, TraceSink};

const IN_PROCESS: [&str; 5] = ["1a1t", "aa1t:stage", "aa1el", "aa1e-fixed:4", "aa1e-var:1:8"];

fn run(config: MasConfig, strategy: &str) -> (Vec<TraceEvent>, RunStats, QuiesceOutcome) {
    let mas = assemble(config).unwrap();
    let sink = Arc::new(TraceSink::new());
    let mut handle = launch(mas, strategy, Arc::clone(&sink)).unwrap();
    let outcome = handle.finish(Duration::from_secs(5));
    (sink.snapshot(), outcome.stats, outcome.outcome)
}

#[test]
fn pingpong_delivers_one_ping_one_pong_under_every_in_process_strategy() {
    for strategy in IN_PROCESS {
        let (trace, stats, outcome) = run(specs::pingpong(), strategy);
        assert_eq!(outcome, QuiesceOutcome::Quiesced, "{strategy} timed out");
        assert_eq!(
            stats.per_pair.get("pinger->ponger"),
            Some(&1),
            "{strategy}: {stats:?}"
        );
        assert_eq!(stats.per_pair.get("ponger->pinger"), Some(&1), "{strategy}");
        assert_eq!(stats.messages_delivered, 2, "{strategy}");
        assert_eq!(stats.delivery_errors, 0, "{strategy}");
        let reveals = trace.iter().filter(|e| e.stage == Stage::Reveal).count();
        assert!(reveals >= 8, "{strategy}: only {reveals} reveals");
        let violations = check_program_order(&trace).unwrap();
        assert!(violations.is_empty(), "{strategy}: {violations:?}");
    }
}

#[test]
fn ring_passes_the_token_once_around_under_every_in_process_strategy() {
    for strategy in IN_PROCESS {
        let (trace, stats, outcome) = run(specs::ring(8), strategy);
        assert_eq!(outcome, QuiesceOutcome::Quiesced, "{strategy} timed out");
        assert_eq!(stats.messages_delivered, 8, "{strategy}");
        assert_eq!(stats.per_pair.len(), 8, "{strategy}");
        assert!(stats.per_pair.values().all(|&n| n == 1), "{strategy}");
        assert!(check_program_order(&trace).unwrap().is_empty(), "{strategy}");
    }
}

#[test]
fn one_agent_one_thread_classifies_per_agent_flow() {
    let (trace, _, _) = run(specs::pingpong(), "1a1t");
    let report = classify(&trace).unwrap();
    assert_eq!(report.observable_class, ObservableClass::PerAgentFlow);
    assert!(report.permits(&StrategyKind::OneAgentOneThread));
}

#[test]
fn single_flow_strategies_classify_single_flow() {
    for strategy in ["aa1t:stage", "aa1t:step", "aa1el", "aa1e-fixed:1"] {
        let (trace, _, _) = run(specs::pingpong(), strategy);
        let report = classify(&trace).unwrap();
        assert_eq!(
            report.observable_class,
            ObservableClass::SingleFlow,
            "{strategy}"
        );
    }
}

#[test]
fn fixed_executor_stays_within_its_carrier_bound() {
    let (trace, _, _) = run(specs::ring(8), "aa1e-fixed:4");
    let report = classify(&trace).unwrap();
    assert!(report.evidence.carriers <= 4, "{:?}", report.evidence);
    assert!(report.permits(&StrategyKind::ExecutorFixed { carriers: 4 }));
}

#[test]
fn seeded_single_flow_runs_are_logically_identical() {
    for strategy in ["aa1t:stage", "aa1el"] {
        let mut config = specs::pingpong();
        config.seed = 1234;
        let (first, _, _) = run(config.clone(), strategy);
        for _ in 0..3 {
            let (again, _, _) = run(config.clone(), strategy);
            assert_eq!(
                logical_diff(&first, &again),
                DiffOutcome::Identical,
                "{strategy} diverged across runs"
            );
        }
    }
}

#[test]
fn fixed_executor_of_one_is_logically_the_event_loop() {
    let mut config = specs::ring(8);
    config.seed = 99;
    let (el_trace, _, _) = run(config.clone(), "aa1el");
    let (ex_trace, _, _) = run(config, "aa1e-fixed:1");
    assert_eq!(logical_diff(&el_trace, &ex_trace), DiffOutcome::Identical);
    let el_class = classify(&el_trace).unwrap();
    let ex_class = classify(&ex_trace).unwrap();
    assert_eq!(el_class.observable_class, ex_class.observable_class);
}

#[test]
fn strategy_independence_same_message_multisets() {
    let mut reference: Option<RunStats> = None;
    for strategy in IN_PROCESS {
        let (_, stats, _) = run(specs::ring(5), strategy);
        if let Some(reference) = &reference {
            assert_eq!(reference.per_pair, stats.per_pair, "{strategy}");
        } else {
            reference = Some(stats);
        }
    }
}

#[test]
fn stage_pipelined_mode_interleaves_stages_without_violations() {
    let mut config = specs::ring(2);
    config.internal = mascot_core::InternalModelConfig::pipelined();
    for strategy in ["aa1el", "aa1e-fixed:4"] {
        let (trace, stats, outcome) = run(config.clone(), strategy);
        assert_eq!(outcome, QuiesceOutcome::Quiesced, "{strategy}");
        assert_eq!(stats.messages_delivered, 2, "{strategy}");
        assert!(check_program_order(&trace).unwrap().is_empty(), "{strategy}");
    }
}

#[test]
fn exactly_once_delivery_accounting() {
    for strategy in IN_PROCESS {
        let (_, stats, _) = run(specs::pingpong(), strategy);
        assert_eq!(
            stats.messages_delivered,
            stats.messages_sent - stats.delivery_errors,
            "{strategy}"
        );
    }
}

#[test]
fn mailbox_fifo_per_sender_receiver_pair() {
    // One sender fires three distinguishable messages at one receiver; the
    // receiver's handling order (visible through its act details) must match
    // send_seq order under every strategy.
    let sender = AgentSpec {
        name: "src".into(),
        initial_beliefs: vec![],
        rules: vec![PlanRule {
            trigger: Trigger::Goal { name: "go".into() },
            guard: Guard::Always,
            body: (1..=3)
                .map(|i| Action::Send {
                    to: mascot_core::agent::Target::Agent("dst".into()),
                    performative: format!("data{i}"),
                    payload: mascot_core::agent::Arg::Lit(mascot_core::agent::Value::Int(i)),
                })
                .collect(),
        }],
        initial_goals: vec!["go".into()],
    };
    let receiver = AgentSpec {
        name: "dst".into(),
        initial_beliefs: vec![],
        rules: (1..=3)
            .map(|i| PlanRule {
                trigger: Trigger::Message {
                    performative: format!("data{i}"),
                },
                guard: Guard::Always,
                body: vec![Action::Log {
                    text: format!("handled{i}"),
                }],
            })
            .collect(),
        initial_goals: vec![],
    };
    let config = MasConfig {
        agents: vec![sender, receiver],
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy::default(),
    };
    for strategy in IN_PROCESS {
        let (trace, stats, _) = run(config.clone(), strategy);
        assert_eq!(stats.messages_delivered, 3, "{strategy}");
        let mut handled: Vec<&TraceEvent> = trace
            .iter()
            .filter(|e| e.agent == "dst" && e.stage == Stage::Act)
            .collect();
        handled.sort_by_key(|e| e.seq);
        let order: Vec<String> = handled
            .iter()
            .filter_map(|e| e.detail.split("log ").nth(1))
            .map(str::to_string)
            .collect();
        assert_eq!(
            order,
            vec!["handled1", "handled2", "handled3"],
            "{strategy}: receive order diverged from send_seq order"
        );
        assert!(check_program_order(&trace).unwrap().is_empty(), "{strategy}");
    }
}

#[test]
fn infinite_self_goal_loop_times_out() {
    let looper = AgentSpec {
        name: "looper".into(),
        initial_beliefs: vec![],
        rules: vec![PlanRule {
            trigger: Trigger::Goal {
                name: "again".into(),
            },
            guard: Guard::Always,
            body: vec![Action::AddGoal {
                goal: "again".into(),
                parallel: false,
            }],
        }],
        initial_goals: vec!["again".into()],
    };
    let config = MasConfig {
        agents: vec![looper],
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy {
            idle_cycles: 3,
            wall_timeout: Duration::from_millis(150),
        },
    };
    let mas = assemble(config).unwrap();
    let sink = Arc::new(TraceSink::new());
    let mut handle = launch(mas, "aa1el", Arc::clone(&sink)).unwrap();
    let outcome = handle.finish(Duration::from_millis(150));
    assert_eq!(outcome.outcome, QuiesceOutcome::TimedOut);
}

#[test]
fn empty_mas_quiesces_immediately() {
    let config = MasConfig {
        agents: vec![],
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy::default(),
    };
    for strategy in IN_PROCESS {
        let mas = assemble(config.clone()).unwrap();
        let sink = Arc::new(TraceSink::new());
        let mut handle = launch(mas, strategy, Arc::clone(&sink)).unwrap();
        let outcome = handle.finish(Duration::from_secs(1));
        assert_eq!(outcome.outcome, QuiesceOutcome::Quiesced, "{strategy}");
        assert!(sink.is_empty());
    }
}

#[test]
fn fixed_executor_rejects_zero_carriers_at_launch() {
    let mas = assemble(specs::pingpong()).unwrap();
    let sink = Arc::new(TraceSink::new());
    let err = match launch(mas, "aa1e-fixed:0", sink) {
        Err(err) => err,
        Ok(_) => panic!("launch with zero carriers must fail"),
    };
    assert!(err.to_string().contains("at least one carrier"));
}

#[test]
fn aa1t_stage_schedule_is_readable_from_the_trace() {
    // Three agents with immediate work: the first nine events must be the
    // three senses, the three deliberates, then the three acts, in agent
    // order.
    let config = specs::spinner(3, Duration::from_micros(100));
    let (trace, _, _) = run(config, "aa1t:stage");
    let first: Vec<(String, Stage)> = trace
        .iter()
        .take(9)
        .map(|e| (e.agent.clone(), e.stage))
        .collect();
    let expected: Vec<(String, Stage)> = [
        ("w0", Stage::Sense),
        ("w1", Stage::Sense),
        ("w2", Stage::Sense),
        ("w0", Stage::Deliberate),
        ("w1", Stage::Deliberate),
        ("w2", Stage::Deliberate),
        ("w0", Stage::Act),
        ("w1", Stage::Act),
        ("w2", Stage::Act),
    ]
    .iter()
    .map(|(a, s)| (a.to_string(), *s))
    .collect();
    assert_eq!(first, expected);
}

#[test]
fn decomposed_stages_on_a_pool_preserve_program_order() {
    let mut config = specs::ring(2);
    config.internal = mascot_core::InternalModelConfig::pipelined();
    let mas = assemble(config).unwrap();
    // decompose_step is the contract the pipelined task chain implements.
    let tasks = mas.agents[0].cell.decompose_step().unwrap();
    assert_eq!(tasks.len(), 3);
    let sink = Arc::new(TraceSink::new());
    let mut handle = launch(mas, "aa1e-fixed:4", Arc::clone(&sink)).unwrap();
    let outcome = handle.finish(Duration::from_secs(5));
    assert_eq!(outcome.outcome, QuiesceOutcome::Quiesced);
    let trace = sink.snapshot();
    assert!(check_program_order(&trace).unwrap().is_empty());
    // Both agents progressed through interleavable stages.
    assert!(trace.iter().any(|e| e.agent == "a0"));
    assert!(trace.iter().any(|e| e.agent == "a1"));
}
