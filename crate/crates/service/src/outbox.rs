//! Bounded per-client queue. When full, the oldest droppable message (state
//! or frame) makes room; events, acks and errors are never dropped.

use std::collections::VecDeque;

use crate::protocol::ServerMessage;

pub const DEFAULT_OUTBOX_CAPACITY: usize = 256;

#[derive(Debug)]
pub struct Outbox {
    queue: VecDeque<ServerMessage>,
    capacity: usize,
    dropped: u64,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox {
            queue: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, msg: ServerMessage) {
        if self.queue.len() >= self.capacity {
            if let Some(i) = self.queue.iter().position(ServerMessage::droppable) {
                self.queue.remove(i);
                self.dropped += 1;
            } else if msg.droppable() {
                self.dropped += 1;
                return;
            }
        }
        self.queue.push_back(msg);
    }

    pub fn drain(&mut self) -> Vec<ServerMessage> {
        self.queue.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
