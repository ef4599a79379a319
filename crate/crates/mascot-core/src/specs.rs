//! Bundled benchmark MAS definitions.
//!
//! - [`pingpong`]: two agents exchanging one ping and one pong, revealing
//!   their carrier around every send and reception;
//! - [`ring`]: N agents passing one token around a ring, one round;
//! - [`spinner`]: M independent agents each burning CPU once, for speedup
//!   measurements.

use std::time::Duration;

use crate::agent::{
    Action, AgentSpec, Arg, Belief, Guard, PlanRule, Target, Trigger, Value,
};
use crate::mas::{MasConfig, QuiescencePolicy};

fn reveal(note: &str) -> Action {
    Action::RevealCarrier { note: note.into() }
}

fn send_to(name: &str, performative: &str, payload: Value) -> Action {
    Action::Send {
        to: Target::Agent(name.into()),
        performative: performative.into(),
        payload: Arg::Lit(payload),
    }
}

/// One round of the ping-pong protocol. The pinger initiates; the ponger
/// replies from a parallel intention so the exchange exercises concurrent
/// intentions, and both sides reveal their carrier before and after each
/// send and reception (8 reveal events per quiescent run).
pub fn pingpong() -> MasConfig {
    let pinger = AgentSpec {
        name: "pinger".into(),
        initial_beliefs: vec![],
        rules: vec![
            PlanRule {
                trigger: Trigger::Goal {
                    name: "start".into(),
                },
                guard: Guard::Always,
                body: vec![
                    reveal("send-ping/pre"),
                    send_to("ponger", "ping", Value::Str("ping".into())),
                    reveal("send-ping/post"),
                ],
            },
            PlanRule {
                trigger: Trigger::Message {
                    performative: "pong".into(),
                },
                guard: Guard::Always,
                body: vec![reveal("recv-pong/pre"), reveal("recv-pong/post")],
            },
        ],
        initial_goals: vec!["start".into()],
    };
    let ponger = AgentSpec {
        name: "ponger".into(),
        initial_beliefs: vec![],
        rules: vec![
            PlanRule {
                trigger: Trigger::Message {
                    performative: "ping".into(),
                },
                guard: Guard::Always,
                body: vec![
                    reveal("recv-ping/pre"),
                    Action::AddGoal {
                        goal: "reply".into(),
                        parallel: true,
                    },
                    reveal("recv-ping/post"),
                ],
            },
            PlanRule {
                trigger: Trigger::Goal {
                    name: "reply".into(),
                },
                guard: Guard::Always,
                body: vec![
                    reveal("send-pong/pre"),
                    send_to("pinger", "pong", Value::Str("pong".into())),
                    reveal("send-pong/post"),
                ],
            },
        ],
        initial_goals: vec![],
    };
    MasConfig {
        agents: vec![pinger, ponger],
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy::default(),
    }
}

/// N agents passing a token once around a ring: `a0` starts, every agent
/// forwards to its successor, `a0` absorbs the returning token. Exactly N
/// messages per run.
pub fn ring(n: usize) -> MasConfig {
    let n = n.max(1);
    let name = |i: usize| format!("a{i}");
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        let successor = name((i + 1) % n);
        let mut rules = Vec::new();
        if i == 0 {
            rules.push(PlanRule {
                trigger: Trigger::Goal {
                    name: "start".into(),
                },
                guard: Guard::Always,
                body: vec![
                    reveal("ring-start"),
                    send_to(&successor, "token", Value::Int(1)),
                ],
            });
            rules.push(PlanRule {
                trigger: Trigger::Message {
                    performative: "token".into(),
                },
                guard: Guard::Always,
                body: vec![reveal("round-complete")],
            });
        } else {
            rules.push(PlanRule {
                trigger: Trigger::Message {
                    performative: "token".into(),
                },
                guard: Guard::Always,
                body: vec![
                    reveal("got-token"),
                    Action::Send {
                        to: Target::Agent(successor),
                        performative: "token".into(),
                        payload: Arg::Binding("payload".into()),
                    },
                ],
            });
        }
        agents.push(AgentSpec {
            name: name(i),
            initial_beliefs: vec![Belief {
                key: "position".into(),
                value: Value::Int(i as i64),
            }],
            rules,
            initial_goals: if i == 0 { vec!["start".into()] } else { vec![] },
        });
    }
    MasConfig {
        agents,
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy::default(),
    }
}

/// M agents that each burn `spin` of CPU time once and stop. No messaging;
/// wall time under different strategies measures available parallelism.
pub fn spinner(agents: usize, spin: Duration) -> MasConfig {
    let agents = (0..agents.max(1))
        .map(|i| AgentSpec {
            name: format!("w{i}"),
            initial_beliefs: vec![],
            rules: vec![PlanRule {
                trigger: Trigger::Goal {
                    name: "work".into(),
                },
                guard: Guard::Always,
                body: vec![Action::BusySpin { duration: spin }],
            }],
            initial_goals: vec!["work".into()],
        })
        .collect();
    MasConfig {
        agents,
        internal: Default::default(),
        seed: 0,
        quiescence: QuiescencePolicy::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mas::assemble;

    #[test]
    fn bundled_specs_assemble() {
        assert_eq!(assemble(pingpong()).unwrap().agents.len(), 2);
        assert_eq!(assemble(ring(8)).unwrap().agents.len(), 8);
        assert_eq!(assemble(spinner(4, Duration::from_millis(1))).unwrap().agents.len(), 4);
    }

    #[test]
    fn pingpong_has_eight_reveals() {
        let config = pingpong();
        let reveals: usize = config
            .agents
            .iter()
            .flat_map(|a| &a.rules)
            .flat_map(|r| &r.body)
            .filter(|a| matches!(a, Action::RevealCarrier { .. }))
            .count();
        assert_eq!(reveals, 8);
    }
}
