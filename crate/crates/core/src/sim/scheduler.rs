use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::NodeId;

/// A scheduled action. Events run in strict `(tick, seq)` order.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub tick: u64,
    pub seq: u64,
    pub target: NodeId,
    pub action: A,
}

struct Queued<A>(Event<A>);

impl<A> PartialEq for Queued<A> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.tick, self.0.seq) == (other.0.tick, other.0.seq)
    }
}

impl<A> Eq for Queued<A> {}

impl<A> PartialOrd for Queued<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Queued<A> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.tick, other.0.seq).cmp(&(self.0.tick, self.0.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PastTick {
    pub now: u64,
    pub requested: u64,
}

pub struct Scheduler<A> {
    queue: BinaryHeap<Queued<A>>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    now: u64,
}

impl<A> Default for Scheduler<A> {
    fn default() -> Self {
        Scheduler {
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_seq: 0,
            now: 0,
        }
    }
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tick of the most recently popped event.
    pub fn now(&self) -> u64 {
        self.now
    }

    /// Queues `action` at `tick`. Sequence numbers grow with every call, so a
    /// same-tick event always runs after the one that scheduled it.
    pub fn schedule(&mut self, tick: u64, target: NodeId, action: A) -> Result<u64, PastTick> {
        if tick < self.now {
            return Err(PastTick {
                now: self.now,
                requested: tick,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            tick,
            seq,
            target,
            action,
        }));
        Ok(seq)
    }

    pub fn cancel(&mut self, seq: u64) {
        self.cancelled.insert(seq);
    }

    pub fn pop(&mut self) -> Option<Event<A>> {
        while let Some(Queued(ev)) = self.queue.pop() {
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            self.now = ev.tick;
            return Some(ev);
        }
        None
    }

    pub fn pending(&self) -> usize {
        self.queue.len().saturating_sub(self.cancelled.len())
    }

    pub fn is_idle(&self) -> bool {
        self.pending() == 0
    }
}
