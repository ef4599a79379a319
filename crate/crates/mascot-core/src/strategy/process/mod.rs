//! One-Agent-One-Process: each agent runs in its own OS process, connected to
//! an in-parent router over loopback TCP. Messages (de)serialize through the
//! documented wire encoding; each child writes its own trace file and the
//! coordinator merges them after the run.
//!
//! The child processes re-execute the current binary with
//! `agent-child --connect <addr> --agent <name>`; any binary embedding this
//! library must route that invocation to [`child::run_agent_child`].

pub mod child;
pub mod frames;

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use frames::{read_frame, write_frame, Frame};

use super::{ExecutionHandle, ExecutionStrategy, LaunchError, RunController, StrategyKind};
use crate::agent::{AgentId, AgentSpec, InternalModelConfig};
use crate::mas::Mas;
use crate::trace::{merge_traces, read_trace_jsonl_lenient, TraceSink};
use crate::transport::{RunStats, StatsCollector};

const CONNECT_DEADLINE: Duration = Duration::from_secs(10);
const SHUTDOWN_DEADLINE: Duration = Duration::from_secs(3);

pub struct OneAgentOneProcess {
    pub port: u16,
    /// Binary to execute for agent children; defaults to the current
    /// executable. Tests point this at a CLI binary.
    pub child_exe: Option<PathBuf>,
}

impl OneAgentOneProcess {
    pub fn new(port: u16) -> Self {
        OneAgentOneProcess {
            port,
            child_exe: None,
        }
    }

    pub fn with_child_exe(port: u16, exe: PathBuf) -> Self {
        OneAgentOneProcess {
            port,
            child_exe: Some(exe),
        }
    }
}

/// Spawns one agent child process pointed at the coordinator endpoint.
pub fn spawn_process_agent(
    exe: &PathBuf,
    address: &str,
    agent: &str,
) -> Result<Child, LaunchError> {
    Command::new(exe)
        .arg("agent-child")
        .arg("--connect")
        .arg(address)
        .arg("--agent")
        .arg(agent)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| LaunchError::Environment(format!("cannot spawn agent process: {e}")))
}

struct SlotState {
    writer: TcpStream,
    alive: bool,
    idle: bool,
    /// Deliveries the child has acknowledged seeing (from its idle reports).
    received_reported: u64,
    /// Deliveries the router pushed to this child.
    delivered: u64,
}

struct Router {
    names: Vec<AgentId>,
    by_name: BTreeMap<AgentId, usize>,
    slots: Vec<Mutex<SlotState>>,
    stats: Arc<StatsCollector>,
}

impl Router {
    /// Handles one child connection until EOF.
    fn serve(self: &Arc<Self>, idx: usize, mut reader: TcpStream) {
        loop {
            match read_frame(&mut reader) {
                Ok(Frame::SendReq(message)) => {
                    self.stats.count_sent();
                    let sender = message.sender.clone();
                    let recipient = message.recipient.clone();
                    let result = self.route(&message);
                    let (ok, error) = match result {
                        Ok(()) => {
                            self.stats.count_delivered(&sender, &recipient);
                            (true, String::new())
                        }
                        Err(reason) => {
                            self.stats.count_delivery_error();
                            (false, reason)
                        }
                    };
                    let mut own = self.slots[idx].lock().unwrap();
                    if write_frame(&mut own.writer, &Frame::SendResult { ok, error }).is_err() {
                        own.alive = false;
                        return;
                    }
                }
                Ok(Frame::IdleReport { idle, received }) => {
                    let mut slot = self.slots[idx].lock().unwrap();
                    slot.idle = idle;
                    slot.received_reported = received;
                }
                Ok(Frame::Bye(summary)) => {
                    self.stats.count_tasks(summary.cycles);
                    self.stats.count_dropped_events(summary.dropped_events);
                    if summary.failed {
                        self.stats.count_failed_agent();
                    }
                }
                Ok(_) => {}
                Err(_) => {
                    self.slots[idx].lock().unwrap().alive = false;
                    return;
                }
            }
        }
    }

    fn route(&self, message: &crate::agent::Message) -> Result<(), String> {
        let Some(&target) = self.by_name.get(&message.recipient) else {
            return Err(format!("unknown recipient `{}`", message.recipient));
        };
        let mut slot = self.slots[target].lock().unwrap();
        if !slot.alive {
            return Err(format!("agent process `{}` is gone", message.recipient));
        }
        match write_frame(&mut slot.writer, &Frame::Deliver(message.clone())) {
            Ok(()) => {
                slot.delivered += 1;
                slot.idle = false;
                Ok(())
            }
            Err(e) => {
                slot.alive = false;
                Err(format!("lost connection to `{}`: {e}", message.recipient))
            }
        }
    }

    fn quiesced(&self) -> bool {
        self.slots.iter().all(|slot| {
            let slot = slot.lock().unwrap();
            !slot.alive || (slot.idle && slot.received_reported == slot.delivered)
        })
    }
}

impl ExecutionStrategy for OneAgentOneProcess {
    fn kind(&self) -> StrategyKind {
        StrategyKind::OneAgentOneProcess { port: self.port }
    }

    fn launch(&self, mas: Mas, sink: Arc<TraceSink>) -> Result<ExecutionHandle, LaunchError> {
        let started = Instant::now();
        let exe = match &self.child_exe {
            Some(exe) => exe.clone(),
            None => std::env::current_exe()
                .map_err(|e| LaunchError::Environment(format!("current_exe: {e}")))?,
        };
        let listener = TcpListener::bind(("127.0.0.1", self.port))
            .map_err(|e| LaunchError::Environment(format!("bind loopback: {e}")))?;
        let address = listener
            .local_addr()
            .map_err(|e| LaunchError::Environment(e.to_string()))?
            .to_string();
        let trace_dir = tempfile::tempdir()
            .map_err(|e| LaunchError::Environment(format!("trace dir: {e}")))?;

        let specs: Vec<AgentSpec> = mas.config.agents.clone();
        let internal: InternalModelConfig = mas.config.internal;
        let idle_cycles = mas.config.quiescence.idle_cycles;
        let stats = Arc::clone(mas.monitor.stats());
        stats.raise_carrier_high_water(specs.len() as u64);

        let mut children: Vec<Option<Child>> = Vec::with_capacity(specs.len());
        let mut pids = Vec::with_capacity(specs.len());
        for spec in &specs {
            let child = spawn_process_agent(&exe, &address, &spec.name)?;
            pids.push((spec.name.clone(), child.id()));
            children.push(Some(child));
        }

        // Collect one Hello per child; arrival order is arbitrary.
        listener
            .set_nonblocking(true)
            .map_err(|e| LaunchError::Environment(e.to_string()))?;
        let deadline = Instant::now() + CONNECT_DEADLINE;
        let mut connected: BTreeMap<AgentId, TcpStream> = BTreeMap::new();
        while connected.len() < specs.len() {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream
                        .set_nonblocking(false)
                        .map_err(|e| LaunchError::Environment(e.to_string()))?;
                    let mut reader = stream
                        .try_clone()
                        .map_err(|e| LaunchError::Environment(e.to_string()))?;
                    match read_frame(&mut reader) {
                        Ok(Frame::Hello { agent }) => {
                            connected.insert(agent, stream);
                        }
                        other => {
                            return Err(LaunchError::Environment(format!(
                                "bad hello from child: {other:?}"
                            )))
                        }
                    }
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        kill_all(&mut children);
                        return Err(LaunchError::Environment(
                            "agent processes did not connect in time".into(),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(LaunchError::Environment(format!("accept: {e}"))),
            }
        }

        let mut names = Vec::new();
        let mut by_name = BTreeMap::new();
        let mut slots = Vec::new();
        let mut trace_paths = Vec::new();
        let mut conn_readers = Vec::new();
        for (idx, spec) in specs.iter().enumerate() {
            let stream = connected.remove(&spec.name).ok_or_else(|| {
                LaunchError::Environment(format!("agent `{}` never connected", spec.name))
            })?;
            let trace_path = trace_dir.path().join(format!("{}.trace.jsonl", spec.name));
            let assign = frames::AssignPayload {
                spec: spec.clone(),
                internal,
                idle_cycles,
                trace_path: trace_path.to_string_lossy().into_owned(),
            };
            let mut writer = stream
                .try_clone()
                .map_err(|e| LaunchError::Environment(e.to_string()))?;
            write_frame(&mut writer, &Frame::Assign(assign))
                .map_err(|e| LaunchError::Environment(format!("assign: {e}")))?;
            names.push(spec.name.clone());
            by_name.insert(spec.name.clone(), idx);
            trace_paths.push(trace_path);
            conn_readers.push(stream.try_clone().map_err(|e| {
                LaunchError::Environment(e.to_string())
            })?);
            slots.push(Mutex::new(SlotState {
                writer: stream,
                alive: true,
                idle: false,
                received_reported: 0,
                delivered: 0,
            }));
        }

        let router = Arc::new(Router {
            names,
            by_name,
            slots,
            stats: Arc::clone(&stats),
        });
        let mut handlers = Vec::new();
        for (idx, reader) in conn_readers.into_iter().enumerate() {
            let router = Arc::clone(&router);
            handlers.push(
                std::thread::Builder::new()
                    .name(format!("router-{}", router.names[idx]))
                    .spawn(move || router.serve(idx, reader))
                    .map_err(|e| LaunchError::Environment(e.to_string()))?,
            );
        }

        Ok(ExecutionHandle::new(
            self.kind(),
            started,
            Box::new(ProcessRun {
                router,
                children: Mutex::new(children),
                pids,
                handlers: Some(handlers),
                trace_paths,
                _trace_dir: trace_dir,
                sink,
                stats,
                merged: false,
            }),
        ))
    }
}

fn kill_all(children: &mut [Option<Child>]) {
    for child in children.iter_mut().flatten() {
        let _ = child.kill();
        let _ = child.wait();
    }
}

struct ProcessRun {
    router: Arc<Router>,
    children: Mutex<Vec<Option<Child>>>,
    pids: Vec<(AgentId, u32)>,
    handlers: Option<Vec<JoinHandle<()>>>,
    trace_paths: Vec<PathBuf>,
    _trace_dir: tempfile::TempDir,
    sink: Arc<TraceSink>,
    stats: Arc<StatsCollector>,
    merged: bool,
}

impl RunController for ProcessRun {
    fn quiesced(&self) -> bool {
        self.router.quiesced()
    }

    fn stop(&mut self) {
        for slot in &self.router.slots {
            let mut slot = slot.lock().unwrap();
            if slot.alive {
                let _ = write_frame(&mut slot.writer, &Frame::Stop);
            }
        }
        // Give children a grace window to flush and exit, then force.
        let deadline = Instant::now() + SHUTDOWN_DEADLINE;
        let mut children = self.children.lock().unwrap();
        loop {
            let mut all_done = true;
            for child in children.iter_mut() {
                if let Some(c) = child {
                    match c.try_wait() {
                        Ok(Some(_)) => *child = None,
                        _ => all_done = false,
                    }
                }
            }
            if all_done {
                break;
            }
            if Instant::now() >= deadline {
                kill_all(&mut children);
                break;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        drop(children);
        if let Some(handlers) = self.handlers.take() {
            for handler in handlers {
                let _ = handler.join();
            }
        }
        if !self.merged {
            self.merged = true;
            let parts: Vec<_> = self
                .trace_paths
                .iter()
                .map(|path| read_trace_jsonl_lenient(path).unwrap_or_default())
                .collect();
            for event in merge_traces(parts) {
                self.sink.append_merged(event);
            }
        }
    }

    fn stats(&self) -> RunStats {
        self.stats.snapshot()
    }

    fn agent_processes(&self) -> Vec<(AgentId, u32)> {
        self.pids.clone()
    }

    fn kill_agent_process(&mut self, agent: &str) -> bool {
        let Some(&idx) = self.router.by_name.get(agent) else {
            return false;
        };
        let mut children = self.children.lock().unwrap();
        if let Some(child) = children[idx].as_mut() {
            let killed = child.kill().is_ok();
            let _ = child.wait();
            children[idx] = None;
            self.router.slots[idx].lock().unwrap().alive = false;
            return killed;
        }
        false
    }
}
