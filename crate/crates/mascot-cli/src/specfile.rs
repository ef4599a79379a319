//! The on-disk MAS specification format (TOML) and the bundled spec names.
//!
//! ```toml
//! seed = 42                 # optional, defaults to 0
//! idle-cycles = 3           # optional quiescence streak
//! timeout-ms = 10000        # optional quiescence wall budget
//!
//! [internal]                # optional
//! mode = "synchronous"      # or "stage-pipelined"
//! max-percepts-per-sense = 8
//! max-actions-per-act = 1
//!
//! [[agent]]
//! name = "pinger"
//! goals = ["start"]
//!
//! [agent.beliefs]           # optional key -> int | string | array
//! retries = 0
//!
//! [[agent.rule]]
//! on = "goal start"         # "goal NAME" | "message PERFORMATIVE" | "belief KEY"
//! if = "retries == 0"       # optional: "KEY == VALUE" | "KEY exists"
//! do = [
//!   "reveal send-ping/pre",
//!   "send ponger ping ping",
//!   "reveal send-ping/post",
//! ]
//! ```
//!
//! Actions, one per string, space-separated:
//!
//! ```text
//! send <to> <performative> [payload]    to/payload may be $sender/$payload
//! update-belief <key> <value>
//! add-goal <goal>            par-goal <goal>
//! reveal [note]              busy-spin <n>(us|ms|s)
//! log <text...>
//! ```
//!
//! Bundled names understood everywhere a spec path is accepted:
//! `pingpong`, `ring-N`, `spinner-M`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use mascot_core::agent::{
    Action, AgentSpec, Arg, Belief, Guard, PlanRule, Target, Trigger, Value,
};
use mascot_core::mas::{MasConfig, QuiescencePolicy};
use mascot_core::specs;
use mascot_core::InternalModelConfig;
use serde::Deserialize;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    seed: u64,
    #[serde(rename = "idle-cycles")]
    idle_cycles: Option<u64>,
    #[serde(rename = "timeout-ms")]
    timeout_ms: Option<u64>,
    #[serde(default)]
    internal: InternalSection,
    #[serde(rename = "agent", default)]
    agents: Vec<AgentSection>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InternalSection {
    mode: Option<String>,
    #[serde(rename = "max-percepts-per-sense")]
    max_percepts_per_sense: Option<usize>,
    #[serde(rename = "max-actions-per-act")]
    max_actions_per_act: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    name: String,
    #[serde(default)]
    goals: Vec<String>,
    #[serde(default)]
    beliefs: BTreeMap<String, toml::Value>,
    #[serde(rename = "rule", default)]
    rules: Vec<RuleSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSection {
    on: String,
    #[serde(rename = "if")]
    guard: Option<String>,
    #[serde(rename = "do")]
    body: Vec<String>,
}

/// Resolves a bundled spec name (`pingpong`, `ring-N`, `spinner-M`) or loads
/// a TOML file.
pub fn resolve(spec: &str) -> Result<MasConfig> {
    if spec == "pingpong" {
        return Ok(specs::pingpong());
    }
    if let Some(n) = spec.strip_prefix("ring-") {
        let n: usize = n.parse().context("ring-N needs an integer N")?;
        return Ok(specs::ring(n));
    }
    if let Some(m) = spec.strip_prefix("spinner-") {
        let m: usize = m.parse().context("spinner-M needs an integer M")?;
        return Ok(specs::spinner(m, Duration::from_millis(1)));
    }
    let text = std::fs::read_to_string(Path::new(spec))
        .with_context(|| format!("cannot read MAS spec `{spec}`"))?;
    parse(&text).with_context(|| format!("in MAS spec `{spec}`"))
}

pub fn parse(text: &str) -> Result<MasConfig> {
    let file: SpecFile = toml::from_str(text)?;
    let mut internal = InternalModelConfig::default();
    match file.internal.mode.as_deref() {
        None | Some("synchronous") => {}
        Some("stage-pipelined") => internal.mode = mascot_core::InternalMode::StagePipelined,
        Some(other) => bail!("unknown internal mode `{other}`"),
    }
    if let Some(m) = file.internal.max_percepts_per_sense {
        internal.max_percepts_per_sense = m;
    }
    if let Some(k) = file.internal.max_actions_per_act {
        internal.max_actions_per_act = k;
    }
    let mut quiescence = QuiescencePolicy::default();
    if let Some(idle) = file.idle_cycles {
        quiescence.idle_cycles = idle;
    }
    if let Some(ms) = file.timeout_ms {
        quiescence.wall_timeout = Duration::from_millis(ms);
    }
    let agents = file
        .agents
        .iter()
        .map(agent_from_section)
        .collect::<Result<Vec<_>>>()?;
    Ok(MasConfig {
        agents,
        internal,
        seed: file.seed,
        quiescence,
    })
}

fn agent_from_section(section: &AgentSection) -> Result<AgentSpec> {
    let initial_beliefs = section
        .beliefs
        .iter()
        .map(|(key, value)| {
            Ok(Belief {
                key: key.clone(),
                value: value_from_toml(value)
                    .with_context(|| format!("belief `{key}` of agent `{}`", section.name))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rules = section
        .rules
        .iter()
        .map(|rule| rule_from_section(rule).with_context(|| format!("agent `{}`", section.name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AgentSpec {
        name: section.name.clone(),
        initial_beliefs,
        rules,
        initial_goals: section.goals.clone(),
    })
}

fn value_from_toml(value: &toml::Value) -> Result<Value> {
    match value {
        toml::Value::Integer(i) => Ok(Value::Int(*i)),
        toml::Value::String(s) => Ok(Value::Str(s.clone())),
        toml::Value::Array(items) => Ok(Value::Tuple(
            items.iter().map(value_from_toml).collect::<Result<_>>()?,
        )),
        other => bail!("unsupported belief value {other:?} (use int, string or array)"),
    }
}

fn rule_from_section(rule: &RuleSection) -> Result<PlanRule> {
    let trigger = parse_trigger(&rule.on)?;
    let guard = match &rule.guard {
        None => Guard::Always,
        Some(text) => parse_guard(text)?,
    };
    let body = rule
        .body
        .iter()
        .map(|action| parse_action(action))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanRule {
        trigger,
        guard,
        body,
    })
}

fn parse_trigger(text: &str) -> Result<Trigger> {
    let mut parts = text.split_whitespace();
    let kind = parts.next().unwrap_or("");
    let subject = parts
        .next()
        .ok_or_else(|| anyhow!("trigger `{text}` needs a subject"))?;
    if parts.next().is_some() {
        bail!("trigger `{text}` has trailing tokens");
    }
    match kind {
        "goal" => Ok(Trigger::Goal {
            name: subject.to_string(),
        }),
        "message" => Ok(Trigger::Message {
            performative: subject.to_string(),
        }),
        "belief" => Ok(Trigger::Belief {
            key: subject.to_string(),
        }),
        other => bail!("unknown trigger kind `{other}` (goal|message|belief)"),
    }
}

fn parse_guard(text: &str) -> Result<Guard> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    match tokens.as_slice() {
        [key, "exists"] => Ok(Guard::BeliefExists {
            key: key.to_string(),
        }),
        [key, "==", value] => Ok(Guard::BeliefIs {
            key: key.to_string(),
            value: parse_literal(value),
        }),
        _ => bail!("guard `{text}` must be `KEY exists` or `KEY == VALUE`"),
    }
}

fn parse_action(text: &str) -> Result<Action> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let Some((&kind, args)) = tokens.split_first() else {
        bail!("empty action");
    };
    match kind {
        "send" => {
            let (to, rest) = args
                .split_first()
                .ok_or_else(|| anyhow!("send needs a recipient"))?;
            let (performative, rest) = rest
                .split_first()
                .ok_or_else(|| anyhow!("send needs a performative"))?;
            let payload = match rest {
                [] => Arg::Lit(Value::Str(String::new())),
                [one] => parse_arg(one),
                _ => bail!("send takes at most one payload token"),
            };
            let to = if *to == "$sender" {
                Target::Sender
            } else {
                Target::Agent(to.to_string())
            };
            Ok(Action::Send {
                to,
                performative: performative.to_string(),
                payload,
            })
        }
        "update-belief" => match args {
            [key, value] => Ok(Action::UpdateBelief {
                key: key.to_string(),
                value: parse_arg(value),
            }),
            _ => bail!("update-belief needs `KEY VALUE`"),
        },
        "add-goal" | "par-goal" => match args {
            [goal] => Ok(Action::AddGoal {
                goal: goal.to_string(),
                parallel: kind == "par-goal",
            }),
            _ => bail!("{kind} needs exactly one goal name"),
        },
        "reveal" => Ok(Action::RevealCarrier {
            note: args.join(" "),
        }),
        "busy-spin" => match args {
            [duration] => Ok(Action::BusySpin {
                duration: parse_duration(duration)?,
            }),
            _ => bail!("busy-spin needs a duration like 5ms"),
        },
        "log" => Ok(Action::Log {
            text: args.join(" "),
        }),
        other => bail!("unknown action `{other}`"),
    }
}

fn parse_arg(token: &str) -> Arg {
    match token.strip_prefix('$') {
        Some(binding) => Arg::Binding(binding.to_string()),
        None => Arg::Lit(parse_literal(token)),
    }
}

fn parse_literal(token: &str) -> Value {
    match token.parse::<i64>() {
        Ok(i) => Value::Int(i),
        Err(_) => Value::Str(token.to_string()),
    }
}

pub fn parse_duration(token: &str) -> Result<Duration> {
    let (digits, unit): (String, String) = token.chars().partition(|c| c.is_ascii_digit());
    let amount: u64 = digits.parse().context("duration needs digits")?;
    match unit.as_str() {
        "us" => Ok(Duration::from_micros(amount)),
        "ms" | "" => Ok(Duration::from_millis(amount)),
        "s" => Ok(Duration::from_secs(amount)),
        other => bail!("unknown duration unit `{other}` (us|ms|s)"),
    }
}
