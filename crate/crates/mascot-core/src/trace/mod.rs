//! Execution tracing: the instrumented record of stage executions.
//!
//! Every productive cycle emits one `sense` and one `deliberate` event plus
//! one event per executed action (`act`, or `reveal` for the
//! carrier-revealing action). Idle cycles emit nothing, so traces record
//! logical activity only and single-flow runs stay reproducible.
//!
//! # Trace file format
//!
//! JSON Lines, UTF-8, one event per line, fields in this order:
//! `seq,wall_ns,agent,cycle,stage,intention,carrier,process,detail`.
//! `seq` is strictly increasing in emission order within one process.
//! Multi-process traces are merged by sorting on `(wall_ns, process, seq)`;
//! cross-process order is therefore approximate while per-process order
//! stays exact.
//!
//! # Detail grammar
//!
//! - sense: `sensed=<n>`
//! - deliberate: `spawned=<n> selected=<n>`
//! - act/reveal: `a<body-index> <description>`, e.g. `a1 send ping -> ponger`
//!   or `a0 reveal before-send`. Failed sends append
//!   ` [delivery-error: <reason>]`.

mod analysis;

pub use analysis::{
    check_program_order, classify, logical_diff, logical_trace, merge_traces,
    ClassificationReport, ClassifyError, CompatibleStrategy, DiffOutcome, Evidence, LogicalEvent,
    ObservableClass, TraceFormatError, Violation,
};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::carrier;

/// Which part of the control loop an event records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Sense,
    Deliberate,
    Act,
    Reveal,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Sense => "sense",
            Stage::Deliberate => "deliberate",
            Stage::Act => "act",
            Stage::Reveal => "reveal",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub wall_ns: u64,
    pub agent: String,
    pub cycle: u64,
    pub stage: Stage,
    pub intention: Option<u64>,
    pub carrier: u64,
    pub process: u32,
    pub detail: String,
}

struct SinkInner {
    events: Vec<TraceEvent>,
    next_seq: u64,
    closed: bool,
    dropped: u64,
    tee: Option<BufWriter<File>>,
}

/// Append-only event sink. Concurrent appends from any carrier are totally
/// ordered by `seq`; append order equals seq order.
pub struct TraceSink {
    inner: Mutex<SinkInner>,
}

impl Default for TraceSink {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceSink {
    pub fn new() -> Self {
        TraceSink {
            inner: Mutex::new(SinkInner {
                events: Vec::new(),
                next_seq: 1,
                closed: false,
                dropped: 0,
                tee: None,
            }),
        }
    }

    /// A sink that additionally writes (and flushes) each event as a JSONL
    /// line, so a killed process leaves a readable prefix behind.
    pub fn with_tee(path: &Path) -> std::io::Result<Self> {
        let sink = TraceSink::new();
        sink.inner.lock().unwrap().tee = Some(BufWriter::new(File::create(path)?));
        Ok(sink)
    }

    /// Records one event, assigning the next seq and capturing the calling
    /// thread's carrier identity. Returns `None` after [`TraceSink::close`],
    /// counting the event as dropped.
    pub fn record(
        &self,
        agent: &str,
        cycle: u64,
        stage: Stage,
        intention: Option<u64>,
        detail: String,
    ) -> Option<TraceEvent> {
        let wall_ns = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let mut inner = self.inner.lock().unwrap();
        if inner.closed {
            inner.dropped += 1;
            return None;
        }
        let event = TraceEvent {
            seq: inner.next_seq,
            wall_ns,
            agent: agent.to_string(),
            cycle,
            stage,
            intention,
            carrier: carrier::current_carrier(),
            process: carrier::current_process(),
            detail,
        };
        inner.next_seq += 1;
        if let Some(tee) = inner.tee.as_mut() {
            if let Ok(line) = serde_json::to_string(&event) {
                let _ = writeln!(tee, "{line}");
                let _ = tee.flush();
            }
        }
        inner.events.push(event.clone());
        Some(event)
    }

    /// Appends an event recorded elsewhere (another process), keeping its
    /// original seq and identity fields.
    pub fn append_merged(&self, event: TraceEvent) {
        let mut inner = self.inner.lock().unwrap();
        if inner.closed {
            inner.dropped += 1;
            return;
        }
        inner.events.push(event);
    }

    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().unwrap().dropped
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<TraceEvent> {
        self.inner.lock().unwrap().events.clone()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_trace_jsonl(path: &Path, events: &[TraceEvent]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace_jsonl(path: &Path) -> Result<Vec<TraceEvent>, TraceFileError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| TraceFileError::Malformed {
            line: idx + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Like [`read_trace_jsonl`] but tolerates a truncated final line, which a
/// killed process can leave behind.
pub fn read_trace_jsonl_lenient(path: &Path) -> Result<Vec<TraceEvent>, TraceFileError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut events = Vec::new();
    let last = lines.len().saturating_sub(1);
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(event) => events.push(event),
            Err(source) if idx == last => {
                let _ = source;
                break;
            }
            Err(source) => {
                return Err(TraceFileError::Malformed {
                    line: idx + 1,
                    source,
                })
            }
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn record_after_close_is_dropped_and_counted() {
        let sink = TraceSink::new();
        sink.record("a", 1, Stage::Sense, None, "sensed=1".into())
            .unwrap();
        sink.close();
        assert!(sink
            .record("a", 1, Stage::Act, None, "a0 log x".into())
            .is_none());
        assert_eq!(sink.dropped(), 1);
        assert_eq!(sink.len(), 1);
    }

    #[test]
    fn concurrent_records_get_a_gap_free_total_order() {
        let sink = Arc::new(TraceSink::new());
        let threads: Vec<_> = (0..8)
            .map(|t| {
                let sink = Arc::clone(&sink);
                std::thread::spawn(move || {
                    for i in 0..1250 {
                        sink.record(
                            &format!("agent{t}"),
                            i,
                            Stage::Reveal,
                            Some(0),
                            format!("a0 reveal {t}:{i}"),
                        );
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        let events = sink.snapshot();
        assert_eq!(events.len(), 10_000);
        // Append order equals seq order and seqs are exactly 1..=10000.
        for (idx, event) in events.iter().enumerate() {
            assert_eq!(event.seq, idx as u64 + 1);
        }
    }

    #[test]
    fn jsonl_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let sink = TraceSink::new();
        sink.record("a", 1, Stage::Sense, None, "sensed=1".into());
        sink.record("a", 1, Stage::Act, Some(1), "a0 log hi".into());
        let events = sink.snapshot();
        write_trace_jsonl(&path, &events).unwrap();
        assert_eq!(read_trace_jsonl(&path).unwrap(), events);

        std::fs::write(&path, "{\"seq\":1}\n").unwrap();
        match read_trace_jsonl(&path) {
            Err(TraceFileError::Malformed { line: 1, .. }) => {}
            other => panic!("expected malformed line 1, got {other:?}"),
        }
    }

    #[test]
    fn lenient_reader_drops_a_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let sink = TraceSink::new();
        sink.record("a", 1, Stage::Sense, None, "sensed=1".into());
        let events = sink.snapshot();
        let mut text = serde_json::to_string(&events[0]).unwrap();
        text.push('\n');
        text.push_str("{\"seq\":2,\"wall_ns\":");
        std::fs::write(&path, text).unwrap();
        assert_eq!(read_trace_jsonl_lenient(&path).unwrap(), events);
    }
}
