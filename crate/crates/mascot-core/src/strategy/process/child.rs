//! The agent-side runtime of the one-agent-one-process strategy.
//!
//! A child connects to the coordinator, identifies itself, receives its
//! assignment and then runs a plain synchronous control loop on its main
//! thread. A reader thread feeds the mailbox and answers send
//! acknowledgements. Trace events stream to a local JSONL file (flushed per
//! event, so a killed child leaves a usable prefix).

use std::net::TcpStream;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::frames::{read_frame, write_frame, ChildSummary, Frame};
use crate::agent::{AgentBoard, AgentCell, Message};
use crate::mailbox::Mailbox;
use crate::strategy::IDLE_PARK;
use crate::trace::TraceSink;
use crate::transport::{DeliveryError, Effector, Receipt, StatsCollector};

const ACK_TIMEOUT: Duration = Duration::from_secs(5);

/// Sends via the coordinator and blocks for the routing acknowledgement, so
/// delivery failures surface inside the act stage like any local transport
/// error.
struct SocketEffector {
    writer: Mutex<TcpStream>,
    acks: Mutex<mpsc::Receiver<(bool, String)>>,
}

impl Effector for SocketEffector {
    fn deliver(&self, message: Message) -> Result<Receipt, DeliveryError> {
        let start = std::time::Instant::now();
        {
            let mut writer = self.writer.lock().unwrap();
            write_frame(&mut *writer, &Frame::SendReq(message))
                .map_err(|e| DeliveryError::Transport(e.to_string()))?;
        }
        let (ok, error) = self
            .acks
            .lock()
            .unwrap()
            .recv_timeout(ACK_TIMEOUT)
            .map_err(|_| DeliveryError::Transport("no routing acknowledgement".into()))?;
        if ok {
            Ok(Receipt {
                latency: start.elapsed(),
            })
        } else {
            Err(DeliveryError::Transport(error))
        }
    }
}

/// Runs one agent as the current process, driven by the coordinator at
/// `address`. Returns the process exit code.
pub fn run_agent_child(address: &str, agent_name: &str) -> i32 {
    match child_main(address, agent_name) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("agent child `{agent_name}`: {err}");
            1
        }
    }
}

fn child_main(address: &str, agent_name: &str) -> Result<(), String> {
    let stream = TcpStream::connect(address).map_err(|e| format!("connect {address}: {e}"))?;
    let mut writer = stream.try_clone().map_err(|e| e.to_string())?;
    write_frame(
        &mut writer,
        &Frame::Hello {
            agent: agent_name.to_string(),
        },
    )
    .map_err(|e| e.to_string())?;

    let mut reader = stream.try_clone().map_err(|e| e.to_string())?;
    let assignment = match read_frame(&mut reader).map_err(|e| e.to_string())? {
        Frame::Assign(payload) => payload,
        other => return Err(format!("expected assignment, got {other:?}")),
    };

    let mailbox = Arc::new(Mailbox::new());
    let stop = Arc::new(AtomicBool::new(false));
    let received = Arc::new(AtomicU64::new(0));
    let (ack_tx, ack_rx) = mpsc::channel();

    let reader_mailbox = Arc::clone(&mailbox);
    let reader_stop = Arc::clone(&stop);
    let reader_received = Arc::clone(&received);
    let reader_thread = std::thread::Builder::new()
        .name("child-reader".into())
        .spawn(move || loop {
            match read_frame(&mut reader) {
                Ok(Frame::Deliver(message)) => {
                    reader_mailbox.push(message);
                    reader_received.fetch_add(1, Ordering::Release);
                }
                Ok(Frame::SendResult { ok, error }) => {
                    let _ = ack_tx.send((ok, error));
                }
                Ok(Frame::Stop) | Err(_) => {
                    reader_stop.store(true, Ordering::Release);
                    return;
                }
                Ok(_) => {}
            }
        })
        .map_err(|e| e.to_string())?;

    let sink = TraceSink::with_tee(Path::new(&assignment.trace_path))
        .map_err(|e| format!("trace file: {e}"))?;
    let board = Arc::new(AgentBoard::default());
    let stats = Arc::new(StatsCollector::new());
    let mut cell = AgentCell::new(
        &assignment.spec,
        assignment.internal,
        Arc::clone(&board),
        Arc::clone(&stats),
    );
    let effector = SocketEffector {
        writer: Mutex::new(stream.try_clone().map_err(|e| e.to_string())?),
        acks: Mutex::new(ack_rx),
    };

    // Reports carry the number of deliveries the agent has actually drained,
    // not the number the reader has pushed: a message that lands between the
    // idle check and the report must keep the coordinator from declaring
    // quiescence. Push count minus queue length can only undercount under
    // that race, which errs on the safe side.
    let drained = |received: &AtomicU64, mailbox: &Mailbox| -> u64 {
        received
            .load(Ordering::Acquire)
            .saturating_sub(mailbox.len() as u64)
    };
    let mut reported_idle = false;
    while !stop.load(Ordering::Acquire) {
        let report = cell.step(&mailbox, &effector, &sink);
        if report.idle {
            let settled = board.idle_streak() >= assignment.idle_cycles && mailbox.is_empty();
            if settled && !reported_idle {
                reported_idle = true;
                let frame = Frame::IdleReport {
                    idle: true,
                    received: drained(&received, &mailbox),
                };
                let mut w = effector.writer.lock().unwrap();
                let _ = write_frame(&mut *w, &frame);
            }
            std::thread::sleep(IDLE_PARK);
        } else if reported_idle {
            reported_idle = false;
            let frame = Frame::IdleReport {
                idle: false,
                received: drained(&received, &mailbox),
            };
            let mut w = effector.writer.lock().unwrap();
            let _ = write_frame(&mut *w, &frame);
        }
    }

    let summary = ChildSummary {
        cycles: board.cycles(),
        dropped_events: board.dropped_events(),
        failed: cell.failed(),
    };
    {
        let mut w = effector.writer.lock().unwrap();
        let _ = write_frame(&mut *w, &Frame::Bye(summary));
    }
    sink.close();
    drop(effector);
    let _ = stream.shutdown(std::net::Shutdown::Both);
    let _ = reader_thread.join();
    Ok(())
}
