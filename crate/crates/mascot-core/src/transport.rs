//! Message delivery: the in-memory router and the binary wire encoding used
//! across process boundaries.
//!
//! # Wire format
//!
//! Messages cross streams as length-prefixed frames: a 4-byte big-endian
//! payload length, then the payload. A message payload is:
//!
//! ```text
//! offset  size  field
//! 0       1     version, currently 0x01
//! 1       2+n   sender        (u16 BE length, then UTF-8 bytes)
//! ..      2+n   recipient     (u16 BE length, then UTF-8 bytes)
//! ..      2+n   performative  (u16 BE length, then UTF-8 bytes)
//! ..      8     send_seq      (u64 BE)
//! ..      ..    payload value (see below)
//! ```
//!
//! Values encode as a tag byte followed by the body: `0x00` int (i64 BE),
//! `0x01` string (u16 BE length + UTF-8), `0x02` tuple (u16 BE element count,
//! then each element). Decoding is the exact inverse; round-tripping any
//! message is the identity.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use crate::agent::{AgentId, Message, Value};
use crate::mailbox::Mailbox;

pub const WIRE_VERSION: u8 = 1;

/// Proof of delivery, carrying the transport latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub latency: Duration,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum DeliveryError {
    #[error("unknown recipient `{0}`")]
    UnknownRecipient(AgentId),
    #[error("transport failure: {0}")]
    Transport(String),
}

/// What an acting agent uses to reach the rest of the MAS.
pub trait Effector: Send + Sync {
    fn deliver(&self, message: Message) -> Result<Receipt, DeliveryError>;
}

/// Messaging counters shared by transports, strategies and reports.
#[derive(Default)]
pub struct StatsCollector {
    sent: AtomicU64,
    delivered: AtomicU64,
    delivery_errors: AtomicU64,
    dropped_events: AtomicU64,
    tasks_executed: AtomicU64,
    carrier_high_water: AtomicU64,
    failed_agents: AtomicU64,
    per_pair: Mutex<BTreeMap<(AgentId, AgentId), u64>>,
}

impl StatsCollector {
    pub fn new() -> Self {
        StatsCollector::default()
    }

    pub fn count_sent(&self) {
        self.sent.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_delivered(&self, sender: &str, recipient: &str) {
        self.delivered.fetch_add(1, Ordering::Relaxed);
        *self
            .per_pair
            .lock()
            .unwrap()
            .entry((sender.to_string(), recipient.to_string()))
            .or_insert(0) += 1;
    }

    pub fn count_delivery_error(&self) {
        self.delivery_errors.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_dropped_events(&self, n: u64) {
        self.dropped_events.fetch_add(n, Ordering::Relaxed);
    }

    pub fn count_tasks(&self, n: u64) {
        self.tasks_executed.fetch_add(n, Ordering::Relaxed);
    }

    pub fn count_failed_agent(&self) {
        self.failed_agents.fetch_add(1, Ordering::Relaxed);
    }

    pub fn raise_carrier_high_water(&self, carriers: u64) {
        self.carrier_high_water.fetch_max(carriers, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> RunStats {
        RunStats {
            messages_sent: self.sent.load(Ordering::Relaxed),
            messages_delivered: self.delivered.load(Ordering::Relaxed),
            delivery_errors: self.delivery_errors.load(Ordering::Relaxed),
            dropped_events: self.dropped_events.load(Ordering::Relaxed),
            tasks_executed: self.tasks_executed.load(Ordering::Relaxed),
            carrier_high_water: self.carrier_high_water.load(Ordering::Relaxed),
            failed_agents: self.failed_agents.load(Ordering::Relaxed),
            per_pair: self
                .per_pair
                .lock()
                .unwrap()
                .iter()
                .map(|((s, r), n)| (format!("{s}->{r}"), *n))
                .collect(),
        }
    }
}

/// Final counters of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunStats {
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub delivery_errors: u64,
    pub dropped_events: u64,
    pub tasks_executed: u64,
    pub carrier_high_water: u64,
    pub failed_agents: u64,
    /// Delivered message counts keyed `sender->recipient`.
    pub per_pair: BTreeMap<String, u64>,
}

type Waker = Arc<dyn Fn(&str) + Send + Sync>;

/// Routes messages to in-process mailboxes. Safe to call from any carrier;
/// delivers each accepted message exactly once, FIFO per sender.
pub struct InMemoryTransport {
    routes: BTreeMap<AgentId, Arc<Mailbox>>,
    stats: Arc<StatsCollector>,
    waker: RwLock<Option<Waker>>,
}

impl InMemoryTransport {
    pub fn new(routes: BTreeMap<AgentId, Arc<Mailbox>>, stats: Arc<StatsCollector>) -> Self {
        InMemoryTransport {
            routes,
            stats,
            waker: RwLock::new(None),
        }
    }

    /// Installs a callback invoked after each delivery with the recipient
    /// name. Task-based strategies use it to reschedule idle agents.
    pub fn set_waker(&self, waker: Waker) {
        *self.waker.write().unwrap() = Some(waker);
    }

    pub fn stats(&self) -> &Arc<StatsCollector> {
        &self.stats
    }
}

impl Effector for InMemoryTransport {
    fn deliver(&self, message: Message) -> Result<Receipt, DeliveryError> {
        let start = Instant::now();
        self.stats.count_sent();
        let Some(mailbox) = self.routes.get(&message.recipient) else {
            self.stats.count_delivery_error();
            return Err(DeliveryError::UnknownRecipient(message.recipient));
        };
        let sender = message.sender.clone();
        let recipient = message.recipient.clone();
        mailbox.push(message);
        self.stats.count_delivered(&sender, &recipient);
        if let Some(waker) = self.waker.read().unwrap().as_ref() {
            waker(&recipient);
        }
        Ok(Receipt {
            latency: start.elapsed(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("truncated message")]
    Truncated,
    #[error("invalid utf-8 in message field")]
    Utf8,
    #[error("unknown value tag {0}")]
    ValueTag(u8),
}

pub fn encode_message(message: &Message) -> Vec<u8> {
    let mut out = vec![WIRE_VERSION];
    encode_str(&mut out, &message.sender);
    encode_str(&mut out, &message.recipient);
    encode_str(&mut out, &message.performative);
    out.extend_from_slice(&message.send_seq.to_be_bytes());
    encode_value(&mut out, &message.payload);
    out
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let version = cursor.u8()?;
    if version != WIRE_VERSION {
        return Err(WireError::Version(version));
    }
    let sender = cursor.string()?;
    let recipient = cursor.string()?;
    let performative = cursor.string()?;
    let send_seq = cursor.u64()?;
    let payload = cursor.value()?;
    Ok(Message {
        sender,
        recipient,
        performative,
        payload,
        send_seq,
    })
}

fn encode_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn encode_value(out: &mut Vec<u8>, value: &Value) {
    match value {
        Value::Int(i) => {
            out.push(0);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Value::Str(s) => {
            out.push(1);
            encode_str(out, s);
        }
        Value::Tuple(items) => {
            out.push(2);
            out.extend_from_slice(&(items.len() as u16).to_be_bytes());
            for item in items {
                encode_value(out, item);
            }
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.bytes.len() {
            return Err(WireError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::Utf8)
    }

    fn value(&mut self) -> Result<Value, WireError> {
        match self.u8()? {
            0 => Ok(Value::Int(i64::from_be_bytes(
                self.take(8)?.try_into().unwrap(),
            ))),
            1 => Ok(Value::Str(self.string()?)),
            2 => {
                let count = self.u16()? as usize;
                let mut items = Vec::with_capacity(count);
                for _ in 0..count {
                    items.push(self.value()?);
                }
                Ok(Value::Tuple(items))
            }
            tag => Err(WireError::ValueTag(tag)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn transport_with(names: &[&str]) -> (InMemoryTransport, Vec<Arc<Mailbox>>) {
        let stats = Arc::new(StatsCollector::new());
        let boxes: Vec<Arc<Mailbox>> = names.iter().map(|_| Arc::new(Mailbox::new())).collect();
        let routes = names
            .iter()
            .zip(&boxes)
            .map(|(n, b)| (n.to_string(), Arc::clone(b)))
            .collect();
        (InMemoryTransport::new(routes, stats), boxes)
    }

    fn msg(sender: &str, recipient: &str, seq: u64) -> Message {
        Message {
            sender: sender.into(),
            recipient: recipient.into(),
            performative: "ping".into(),
            payload: Value::Str("ping".into()),
            send_seq: seq,
        }
    }

    #[test]
    fn deliver_appends_to_the_recipient_mailbox() {
        let (transport, boxes) = transport_with(&["pinger", "ponger"]);
        transport.deliver(msg("pinger", "ponger", 1)).unwrap();
        assert_eq!(boxes[1].len(), 1);
        let stats = transport.stats().snapshot();
        assert_eq!(stats.messages_delivered, 1);
        assert_eq!(stats.per_pair["pinger->ponger"], 1);
    }

    #[test]
    fn unknown_recipient_is_a_delivery_error() {
        let (transport, _) = transport_with(&["pinger"]);
        let err = transport.deliver(msg("pinger", "ghost", 1)).unwrap_err();
        assert_eq!(err, DeliveryError::UnknownRecipient("ghost".into()));
        let stats = transport.stats().snapshot();
        assert_eq!(stats.messages_sent, 1);
        assert_eq!(stats.delivery_errors, 1);
        assert_eq!(stats.messages_delivered, 0);
    }

    #[test]
    fn wire_layout_is_pinned() {
        let m = Message {
            sender: "a".into(),
            recipient: "b".into(),
            performative: "p".into(),
            payload: Value::Int(-2),
            send_seq: 3,
        };
        let bytes = encode_message(&m);
        assert_eq!(
            bytes,
            vec![
                1, // version
                0, 1, b'a', // sender
                0, 1, b'b', // recipient
                0, 1, b'p', // performative
                0, 0, 0, 0, 0, 0, 0, 3, // send_seq
                0, // int tag
                0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFE, // -2
            ]
        );
        assert_eq!(decode_message(&bytes).unwrap(), m);
    }

    #[test]
    fn decode_rejects_bad_input() {
        assert!(matches!(decode_message(&[9]), Err(WireError::Version(9))));
        let m = msg("a", "b", 1);
        let bytes = encode_message(&m);
        assert!(matches!(
            decode_message(&bytes[..bytes.len() - 1]),
            Err(WireError::Truncated)
        ));
    }

    fn value_strategy() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(Value::Int),
            "[a-z0-9 ]{0,12}".prop_map(Value::Str),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop::collection::vec(inner, 0..4).prop_map(Value::Tuple)
        })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip_is_identity(
            sender in "[a-z]{1,8}",
            recipient in "[a-z]{1,8}",
            performative in "[a-z]{1,8}",
            send_seq in any::<u64>(),
            payload in value_strategy(),
        ) {
            let m = Message { sender, recipient, performative, payload, send_seq };
            prop_assert_eq!(decode_message(&encode_message(&m)).unwrap(), m);
        }
    }
}
