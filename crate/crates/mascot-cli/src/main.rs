//! mascot — run a small BDI MAS under selectable concurrency models, record
//! execution traces, classify the model from the outside, and enumerate
//! admissible interleavings of process terms.
//!
//! Exit codes: 0 success, 2 usage/parse error, 3 quiescence timeout.

mod commands;
mod report;
mod specfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mascot", version, about = "BDI agents under pluggable concurrency models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a MAS under one strategy, write traces, classify the result.
    Bench {
        /// Bundled name (pingpong, ring-N, spinner-M) or a TOML spec path.
        spec: String,
        /// Strategy string, e.g. 1a1t, aa1t:stage, aa1el, aa1e-fixed:4,
        /// aa1e-var:1:8, 1a1p. Equivalent to --strategy.
        strategy: Option<String>,
        #[arg(long = "strategy", value_name = "STRATEGY")]
        strategy_flag: Option<String>,
        /// Seed for runtime-internal choices (overrides the spec file).
        #[arg(long)]
        seed: Option<u64>,
        /// Repetitions; with more than one, logical traces are compared.
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        /// Internal model override: sync | pipelined.
        #[arg(long)]
        internal: Option<String>,
        /// Output directory for traces and reports (default: env MASCOT_OUT
        /// or ./mascot-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Quiescence timeout override in milliseconds.
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Enumerate admissible interleavings of a process term.
    Enumerate {
        /// Term, e.g. "a.b.c|x.y.z" (`.` prefix, `|` parallel, `@n(...)`
        /// recursion).
        term: String,
        /// Discipline: free | event-loop | executor.
        discipline: String,
        /// Carrier count for the executor discipline.
        #[arg(long, short = 'n')]
        carriers: Option<usize>,
        /// Recursion unrolling depth.
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Classify the concurrency model observable in a trace file.
    Classify {
        /// JSONL trace file as written by bench.
        trace: PathBuf,
    },
    /// Compare wall time of a CPU-bound MAS across strategies.
    Speedup {
        /// Agent count.
        #[arg(long, default_value_t = 64)]
        agents: usize,
        /// CPU time each agent burns, e.g. 5ms.
        #[arg(long, default_value = "5ms")]
        spin: String,
        /// Strategies to compare; defaults to all six.
        strategies: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Internal: run one agent as a child process (used by 1a1p).
    #[command(hide = true)]
    AgentChild {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        agent: String,
    },
}

/// Errors that map to specific exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Timeout(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Other(err)
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench {
            spec,
            strategy,
            strategy_flag,
            seed,
            repeat,
            internal,
            out,
            timeout_ms,
        } => commands::bench(commands::BenchArgs {
            spec,
            strategy: strategy.or(strategy_flag),
            seed,
            repeat,
            internal,
            out,
            timeout_ms,
        }),
        Command::Enumerate {
            term,
            discipline,
            carriers,
            depth,
        } => commands::enumerate(&term, &discipline, carriers, depth),
        Command::Classify { trace } => commands::classify(&trace),
        Command::Speedup {
            agents,
            spin,
            strategies,
            seed,
        } => commands::speedup(agents, &spin, &strategies, seed),
        Command::AgentChild { connect, agent } => {
            let code = mascot_core::strategy::process::child::run_agent_child(&connect, &agent);
            return ExitCode::from(code as u8);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Timeout(msg)) => {
            eprintln!("timeout: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Other(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
