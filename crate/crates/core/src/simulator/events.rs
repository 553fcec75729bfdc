use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::client::ClientUpdate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    /// Ranked first so every update arriving at an instant is applied
    /// before replacements pull the model.
    ClientFinish = 0,
    ClientStart = 1,
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    /// In units of the mean client training time.
    pub time: f64,
    pub kind: EventKind,
    /// The finishing client, or for a start the client whose slot is being
    /// refilled (the new client is drawn when the event fires).
    pub client_id: usize,
    pub payload: Option<Finished>,
}

#[derive(Debug, Clone)]
pub struct Finished {
    pub update: ClientUpdate,
    pub start_time: f64,
}

struct Queued {
    event: SimEvent,
    seq: u64,
}

impl Queued {
    fn key(&self) -> (f64, EventKind, usize, u64) {
        (
            self.event.time,
            self.event.kind,
            self.event.client_id,
            self.seq,
        )
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the greatest
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ka, ca, sa) = self.key();
        let (tb, kb, cb, sb) = other.key();
        tb.total_cmp(&ta)
            .then(kb.cmp(&ka))
            .then(cb.cmp(&ca))
            .then(sb.cmp(&sa))
    }
}

/// Future event set ordered by `(time, kind, client_id, insertion)`.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: SimEvent) {
        debug_assert!(event.time.is_finite() && event.time >= 0.0);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { event, seq });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|q| q.event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, kind: EventKind, client_id: usize) -> SimEvent {
        SimEvent {
            time,
            kind,
            client_id,
            payload: None,
        }
    }

    #[test]
    fn orders_by_time_kind_then_client() {
        let mut q = EventQueue::new();
        q.push(ev(2.0, EventKind::ClientFinish, 0));
        q.push(ev(1.0, EventKind::ClientStart, 0));
        q.push(ev(1.0, EventKind::ClientFinish, 5));
        q.push(ev(1.0, EventKind::ClientFinish, 2));
        q.push(ev(0.5, EventKind::ClientStart, 9));
        let order: Vec<(f64, EventKind, usize)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.kind, e.client_id))
            .collect();
        assert_eq!(
            order,
            vec![
                (0.5, EventKind::ClientStart, 9),
                (1.0, EventKind::ClientFinish, 2),
                (1.0, EventKind::ClientFinish, 5),
                (1.0, EventKind::ClientStart, 0),
                (2.0, EventKind::ClientFinish, 0),
            ]
        );
    }

    #[test]
    fn equal_keys_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        for _ in 0..3 {
            q.push(ev(1.0, EventKind::ClientStart, 4));
        }
        q.heap.iter().for_each(|e| assert!(e.seq < 3));
        let seqs: Vec<u64> = std::iter::from_fn(|| q.heap.pop().map(|e| e.seq)).collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }
}
