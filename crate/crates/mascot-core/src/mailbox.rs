//! Per-agent message queues: many producers, one consumer.

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::agent::Message;

#[derive(Default)]
pub struct Mailbox {
    queue: Mutex<VecDeque<Message>>,
}

impl Mailbox {
    pub fn new() -> Self {
        Mailbox::default()
    }

    pub fn push(&self, message: Message) {
        self.queue.lock().unwrap().push_back(message);
    }

    /// Removes and returns up to `n` messages in arrival order.
    pub fn drain_up_to(&self, n: usize) -> Vec<Message> {
        let mut queue = self.queue.lock().unwrap();
        let take = n.min(queue.len());
        queue.drain(..take).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.lock().unwrap().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Value;

    fn msg(seq: u64) -> Message {
        Message {
            sender: "s".into(),
            recipient: "r".into(),
            performative: "p".into(),
            payload: Value::Int(seq as i64),
            send_seq: seq,
        }
    }

    #[test]
    fn drain_preserves_fifo_and_leaves_the_rest() {
        let mb = Mailbox::new();
        for seq in 1..=3 {
            mb.push(msg(seq));
        }
        let first = mb.drain_up_to(2);
        assert_eq!(first.iter().map(|m| m.send_seq).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(mb.len(), 1);
        assert_eq!(mb.drain_up_to(10)[0].send_seq, 3);
        assert!(mb.is_empty());
    }
}
