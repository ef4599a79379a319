//! One-Agent-One-Thread: each agent's whole control loop runs on a dedicated
//! OS thread. Interleaving across agents is whatever the OS scheduler does.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{ExecutionHandle, ExecutionStrategy, LaunchError, RunController, StrategyKind, IDLE_PARK};
use crate::mas::{Mas, RunMonitor};
use crate::trace::TraceSink;
use crate::transport::RunStats;

pub struct OneAgentOneThread;

impl ExecutionStrategy for OneAgentOneThread {
    fn kind(&self) -> StrategyKind {
        StrategyKind::OneAgentOneThread
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = std::time::Instant::now();
        let stop = Arc::new(AtomicBool::new(false));
        let monitor = Arc::clone(&mas.monitor);
        monitor
            .stats()
            .raise_carrier_high_water(mas.agents.len() as u64);
        let mut joins = Vec::with_capacity(mas.agents.len());
        for mut harness in mas.agents {
            let stop = Arc::clone(&stop);
            let sink = Arc::clone(&sink);
            let transport = Arc::clone(&mas.transport);
            let stats = Arc::clone(monitor.stats());
            let name = harness.cell.name().to_string();
            let join = std::thread::Builder::new()
                .name(format!("agent-{name}"))
                .spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        let report =
                            harness
                                .cell
                                .step(&harness.mailbox, transport.as_ref(), &sink);
                        if report.idle {
                            std::thread::sleep(IDLE_PARK);
                        } else {
                            stats.count_tasks(1);
                        }
                    }
                })
                .map_err(|e| LaunchError::Environment(format!("thread spawn: {e}")))?;
            joins.push(join);
        }
        Ok(ExecutionHandle::new(
            StrategyKind::OneAgentOneThread,
            started,
            Box::new(ThreadPerAgentRun {
                monitor,
                stop,
                joins: Some(joins),
            }),
        ))
    }
}

struct ThreadPerAgentRun {
    monitor: Arc<RunMonitor>,
    stop: Arc<AtomicBool>,
    joins: Option<Vec<JoinHandle<()>>>,
}

impl RunController for ThreadPerAgentRun {
    fn quiesced(&self) -> bool {
        self.monitor.idle_quiesced()
    }

    fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(joins) = self.joins.take() {
            for join in joins {
                let _ = join.join();
            }
        }
    }

    fn stats(&self) -> RunStats {
        self.monitor.snapshot()
    }
}
