//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use mascot_ccs::{Discipline, Term};
use mascot_core::mas::{assemble, MasConfig};
use mascot_core::strategy::{StrategyRegistry, QuiesceOutcome};
use mascot_core::trace::{
    check_program_order, classify as classify_trace, logical_diff, logical_trace,
    read_trace_jsonl, DiffOutcome, TraceFileError,
};
use mascot_core::{InternalMode, TraceSink};

use crate::report::RunReport;
use crate::specfile;
use crate::{CliError, CliResult};

pub struct BenchArgs {
    pub spec: String,
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub repeat: u32,
    pub internal: Option<String>,
    pub out: Option<PathBuf>,
    pub timeout_ms: Option<u64>,
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os("MASCOT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mascot-out"))
}

fn apply_overrides(
    config: &mut MasConfig,
    seed: Option<u64>,
    internal: Option<&str>,
    timeout_ms: Option<u64>,
) -> CliResult {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    match internal {
        None => {}
        Some("sync") => config.internal.mode = InternalMode::Synchronous,
        Some("pipelined") => config.internal.mode = InternalMode::StagePipelined,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "--internal must be sync or pipelined, got `{other}`"
            )))
        }
    }
    if let Some(ms) = timeout_ms {
        config.quiescence.wall_timeout = Duration::from_millis(ms);
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> CliResult {
    let strategy_string = args
        .strategy
        .clone()
        .ok_or_else(|| CliError::Usage("bench needs a strategy (positional or --strategy)".into()))?;
    let strategy = StrategyRegistry::standard()
        .parse(&strategy_string)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut config = specfile::resolve(&args.spec).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    apply_overrides(&mut config, args.seed, args.internal.as_deref(), args.timeout_ms)?;

    let out = out_dir(args.out);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create out dir {}", out.display()))
        .map_err(CliError::from)?;

    let label = strategy.kind().label().replace(':', "_");
    let mut logical_reference: Option<Vec<mascot_core::TraceEvent>> = None;
    let mut identical = 0u32;
    let mut timed_out = false;

    for run_idx in 1..=args.repeat.max(1) {
        let mas = assemble(config.clone())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let sink = Arc::new(TraceSink::new());
        let mut handle = strategy
            .launch(mas, Arc::clone(&sink))
            .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
        let outcome = handle.finish(config.quiescence.wall_timeout);
        let trace = sink.snapshot();

        let violations = match check_program_order(&trace) {
            Ok(list) => list.len(),
            Err(err) => return Err(CliError::Other(anyhow::anyhow!(err))),
        };
        let classification = classify_trace(&trace).ok();
        let report = RunReport {
            spec: args.spec.clone(),
            strategy: strategy.kind().label(),
            seed: config.seed,
            run: run_idx,
            quiesced: outcome.outcome == QuiesceOutcome::Quiesced,
            wall_ms: outcome.wall.as_secs_f64() * 1e3,
            messages: outcome.stats.per_pair.clone(),
            stats: outcome.stats.clone(),
            violations,
            classification,
        };
        println!("{}", report.summary_line());
        if let Some(line) = report.compatible_line() {
            println!("{line}");
        }

        let base = out.join(format!("{}-{label}-run{run_idx}", args.spec.replace('/', "_")));
        mascot_core::trace::write_trace_jsonl(&base.with_extension("trace.jsonl"), &trace)
            .context("write trace")
            .map_err(CliError::from)?;
        write_logical_jsonl(&base.with_extension("logical.jsonl"), &trace)?;
        std::fs::write(
            base.with_extension("report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .context("write report")
        .map_err(CliError::from)?;

        if outcome.outcome == QuiesceOutcome::TimedOut {
            timed_out = true;
        }
        match &logical_reference {
            None => {
                logical_reference = Some(trace);
                identical += 1;
            }
            Some(reference) => match logical_diff(reference, &trace) {
                DiffOutcome::Identical => identical += 1,
                DiffOutcome::DivergesAt { index, .. } => {
                    println!("  logical divergence from run 1 at event {index}");
                }
            },
        }
    }

    if args.repeat > 1 {
        println!("logical: {identical}/{} identical", args.repeat);
    }
    if timed_out {
        return Err(CliError::Timeout(format!(
            "`{}` did not quiesce within {:?}",
            strategy_string, config.quiescence.wall_timeout
        )));
    }
    Ok(())
}

fn write_logical_jsonl(path: &Path, trace: &[mascot_core::TraceEvent]) -> CliResult {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path)
            .with_context(|| format!("create {}", path.display()))
            .map_err(CliError::from)?,
    );
    for event in logical_trace(trace) {
        serde_json::to_writer(&mut out, &event)
            .context("serialize logical event")
            .map_err(CliError::from)?;
        out.write_all(b"\n").context("write").map_err(CliError::from)?;
    }
    Ok(())
}

pub fn enumerate(term: &str, discipline: &str, carriers: Option<usize>, depth: usize) -> CliResult {
    let term = Term::parse(term).map_err(|e| CliError::Usage(e.to_string()))?;
    let discipline = match discipline {
        "free" => Discipline::Free,
        "event-loop" => Discipline::EventLoop,
        "executor" => Discipline::Executor {
            carriers: carriers
                .ok_or_else(|| CliError::Usage("executor needs --carriers N".into()))?,
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown discipline `{other}` (free|event-loop|executor)"
            )))
        }
    };
    let set = mascot_ccs::enumerate(&term, discipline, Some(depth))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for sequence in &set.sequences {
        println!("{}", sequence.join(","));
    }
    println!("{}", set.len());
    Ok(())
}

pub fn classify(path: &Path) -> CliResult {
    let trace = match read_trace_jsonl(path) {
        Ok(trace) => trace,
        Err(TraceFileError::Malformed { line, source }) => {
            return Err(CliError::Usage(format!(
                "{} line {line}: {source}",
                path.display()
            )))
        }
        Err(TraceFileError::Io(err)) => {
            return Err(CliError::Usage(format!("{}: {err}", path.display())))
        }
    };
    let report = classify_trace(&trace).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("class: {}", report.observable_class);
    println!(
        "evidence: events={} agents={} carriers={} processes={} shared-carriers={}",
        report.evidence.events,
        report.evidence.agents,
        report.evidence.carriers,
        report.evidence.processes,
        report.evidence.shared_carriers,
    );
    let compatible: Vec<String> = report
        .compatible_strategies
        .iter()
        .map(|c| c.to_string())
        .collect();
    println!("compatible: {}", compatible.join(", "));
    Ok(())
}

pub fn speedup(agents: usize, spin: &str, strategies: &[String], seed: Option<u64>) -> CliResult {
    if agents < 1 {
        return Err(CliError::Usage("--agents must be >= 1".into()));
    }
    let spin = specfile::parse_duration(spin).map_err(|e| CliError::Usage(e.to_string()))?;
    let default_strategies: Vec<String> = [
        "1a1t",
        "aa1t:stage",
        "aa1el",
        "aa1e-fixed:4",
        "aa1e-var:1:8",
        "1a1p",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let strategies = if strategies.is_empty() {
        &default_strategies
    } else {
        strategies
    };

    let registry = StrategyRegistry::standard();
    let mut rows: Vec<(String, f64)> = Vec::new();
    for name in strategies {
        let strategy = registry
            .parse(name)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut config = mascot_core::specs::spinner(agents, spin);
        if let Some(seed) = seed {
            config.seed = seed;
        }
        // Generous budget: the serial baseline needs agents * spin.
        config.quiescence.wall_timeout = spin * agents as u32 * 4 + Duration::from_secs(5);
        let timeout = config.quiescence.wall_timeout;
        let mas = assemble(config).map_err(|e| CliError::Usage(e.to_string()))?;
        let sink = Arc::new(TraceSink::new());
        let mut handle = strategy
            .launch(mas, sink)
            .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
        let outcome = handle.finish(timeout);
        if outcome.outcome == QuiesceOutcome::TimedOut {
            return Err(CliError::Timeout(format!("`{name}` did not quiesce")));
        }
        rows.push((name.clone(), outcome.wall.as_secs_f64() * 1e3));
    }

    let baseline = rows
        .iter()
        .find(|(name, _)| name.starts_with("aa1t"))
        .map(|(_, ms)| *ms)
        .unwrap_or(rows[0].1);
    println!(
        "{} agents x {}us CPU spin, host parallelism {}",
        agents,
        spin.as_micros(),
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    );
    println!("{:<16} {:>10} {:>9}", "strategy", "wall_ms", "speedup");
    for (name, ms) in &rows {
        println!("{:<16} {:>10.1} {:>8.2}x", name, ms, baseline / ms);
    }
    Ok(())
}
