//! Control frames between the coordinator and agent child processes.
//!
//! Every frame is `[u32 BE length][u8 kind][body]`. Message bodies use the
//! binary encoding documented in [`crate::transport`]; control bodies are
//! JSON. The protocol is deliberately small:
//!
//! ```text
//! child -> parent   0x10 Hello        agent name (UTF-8)
//!                   0x11 SendReq      encoded Message
//!                   0x12 IdleReport   [idle u8][drained u64 BE]
//!                   0x13 Bye          JSON ChildSummary
//! parent -> child   0x01 Assign       JSON AssignPayload
//!                   0x02 Deliver      encoded Message
//!                   0x03 Stop         empty
//!                   0x04 SendResult   [ok u8][error UTF-8]
//! ```
//!
//! An idle report's `drained` is the number of deliveries the agent has
//! consumed; the coordinator treats a child as settled only when it is idle
//! and its drained count matches the deliveries routed to it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentSpec, InternalModelConfig, Message};
use crate::transport::{decode_message, encode_message};

const MAX_FRAME: u32 = 16 * 1024 * 1024;

#[derive(Debug)]
pub enum Frame {
    Hello { agent: String },
    SendReq(Message),
    IdleReport { idle: bool, received: u64 },
    Bye(ChildSummary),
    Assign(AssignPayload),
    Deliver(Message),
    Stop,
    SendResult { ok: bool, error: String },
}

/// Everything a child needs to run its agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignPayload {
    pub spec: AgentSpec,
    pub internal: InternalModelConfig,
    pub idle_cycles: u64,
    pub trace_path: String,
}

/// Final counters a child reports before exiting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChildSummary {
    pub cycles: u64,
    pub dropped_events: u64,
    pub failed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame too large: {0} bytes")]
    TooLarge(u32),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("bad frame body: {0}")]
    BadBody(String),
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &Frame) -> Result<(), FrameError> {
    let (kind, body): (u8, Vec<u8>) = match frame {
        Frame::Hello { agent } => (0x10, agent.as_bytes().to_vec()),
        Frame::SendReq(message) => (0x11, encode_message(message)),
        Frame::IdleReport { idle, received } => {
            let mut body = vec![u8::from(*idle)];
            body.extend_from_slice(&received.to_be_bytes());
            (0x12, body)
        }
        Frame::Bye(summary) => (0x13, serde_json::to_vec(summary).unwrap_or_default()),
        Frame::Assign(payload) => (
            0x01,
            serde_json::to_vec(payload).map_err(|e| FrameError::BadBody(e.to_string()))?,
        ),
        Frame::Deliver(message) => (0x02, encode_message(message)),
        Frame::Stop => (0x03, Vec::new()),
        Frame::SendResult { ok, error } => {
            let mut body = vec![u8::from(*ok)];
            body.extend_from_slice(error.as_bytes());
            (0x04, body)
        }
    };
    let len = (body.len() + 1) as u32;
    writer.write_all(&len.to_be_bytes())?;
    writer.write_all(&[kind])?;
    writer.write_all(&body)?;
    writer.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(reader: &mut R) -> Result<Frame, FrameError> {
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len == 0 || len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    let kind = payload[0];
    let body = &payload[1..];
    let bad = |e: String| FrameError::BadBody(e);
    match kind {
        0x10 => Ok(Frame::Hello {
            agent: String::from_utf8(body.to_vec()).map_err(|e| bad(e.to_string()))?,
        }),
        0x11 => Ok(Frame::SendReq(
            decode_message(body).map_err(|e| bad(e.to_string()))?,
        )),
        0x12 => {
            if body.len() != 9 {
                return Err(bad("idle report must be 9 bytes".into()));
            }
            Ok(Frame::IdleReport {
                idle: body[0] != 0,
                received: u64::from_be_bytes(body[1..9].try_into().unwrap()),
            })
        }
        0x13 => Ok(Frame::Bye(
            serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?,
        )),
        0x01 => Ok(Frame::Assign(
            serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?,
        )),
        0x02 => Ok(Frame::Deliver(
            decode_message(body).map_err(|e| bad(e.to_string()))?,
        )),
        0x03 => Ok(Frame::Stop),
        0x04 => Ok(Frame::SendResult {
            ok: body.first().copied().unwrap_or(0) != 0,
            error: String::from_utf8_lossy(body.get(1..).unwrap_or(&[])).into_owned(),
        }),
        other => Err(FrameError::UnknownKind(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Value;

    #[test]
    fn frames_round_trip_over_a_buffer() {
        let message = Message {
            sender: "a".into(),
            recipient: "b".into(),
            performative: "ping".into(),
            payload: Value::Tuple(vec![Value::Int(1), Value::Str("x".into())]),
            send_seq: 2,
        };
        let frames = vec![
            Frame::Hello { agent: "a".into() },
            Frame::SendReq(message.clone()),
            Frame::IdleReport {
                idle: true,
                received: 7,
            },
            Frame::Stop,
            Frame::Deliver(message),
            Frame::SendResult {
                ok: false,
                error: "unknown recipient `x`".into(),
            },
        ];
        let mut buffer = Vec::new();
        for frame in &frames {
            write_frame(&mut buffer, frame).unwrap();
        }
        let mut cursor = std::io::Cursor::new(buffer);
        for frame in &frames {
            let back = read_frame(&mut cursor).unwrap();
            match (frame, &back) {
                (Frame::Hello { agent: a }, Frame::Hello { agent: b }) => assert_eq!(a, b),
                (Frame::SendReq(a), Frame::SendReq(b)) => assert_eq!(a, b),
                (
                    Frame::IdleReport { idle: a, received: r1 },
                    Frame::IdleReport { idle: b, received: r2 },
                ) => {
                    assert_eq!(a, b);
                    assert_eq!(r1, r2);
                }
                (Frame::Stop, Frame::Stop) => {}
                (Frame::Deliver(a), Frame::Deliver(b)) => assert_eq!(a, b),
                (
                    Frame::SendResult { ok: a, error: e1 },
                    Frame::SendResult { ok: b, error: e2 },
                ) => {
                    assert_eq!(a, b);
                    assert_eq!(e1, e2);
                }
                other => panic!("frame kind changed in transit: {other:?}"),
            }
        }
    }
}
