//! A minimal BDI agent runtime whose external concurrency model is a
//! pluggable, runtime-selected strategy, plus the tracing needed to observe
//! which model is actually in effect.
//!
//! Agents are written once as [`agent::AgentSpec`]s (beliefs, plan rules,
//! goals) and run unchanged under any registered [`strategy`]: dedicated
//! threads, a cooperative single thread, an event loop, fixed- or
//! variable-size executors, or one process per agent. Every stage execution
//! is recorded through [`trace`], whose analyses (program-order checking,
//! logical trace comparison, concurrency-class inference) treat the runtime
//! as a black box.

pub mod agent;
pub mod carrier;
pub mod mailbox;
pub mod mas;
pub mod specs;
pub mod strategy;
pub mod trace;
pub mod transport;

pub use agent::{AgentSpec, InternalMode, InternalModelConfig};
pub use mas::{assemble, Mas, MasConfig, QuiescencePolicy};
pub use strategy::{
    launch, ExecutionHandle, ExecutionStrategy, LaunchError, QuiesceOutcome, StrategyKind,
    StrategyRegistry,
};
pub use trace::{TraceEvent, TraceSink};
pub use transport::RunStats;
