//! Time-ordered pending-event queue.
//!
//! Events at equal times are processed by fixed kind priority, then by
//! insertion order, so a run is a pure function of its inputs.

use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Event<K> {
    pub time: f64,
    pub prio: u8,
    seq: u64,
    pub kind: K,
}

pub(crate) struct EventQueue<K> {
    heap: BinaryHeap<HeapEntry<K>>,
    next_seq: u64,
}

struct HeapEntry<K>(Event<K>);

impl<K> PartialEq for HeapEntry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key() == other.cmp_key()
    }
}
impl<K> Eq for HeapEntry<K> {}

impl<K> HeapEntry<K> {
    fn cmp_key(&self) -> (f64, u8, u64) {
        (self.0.time, self.0.prio, self.0.seq)
    }
}

impl<K> PartialOrd for HeapEntry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for HeapEntry<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we pop the earliest event.
        let (ta, pa, sa) = self.cmp_key();
        let (tb, pb, sb) = other.cmp_key();
        tb.total_cmp(&ta).then_with(|| pb.cmp(&pa)).then_with(|| sb.cmp(&sa))
    }
}

impl<K> EventQueue<K> {
    pub fn with_capacity(capacity: usize) -> Self {
        Self { heap: BinaryHeap::with_capacity(capacity), next_seq: 0 }
    }

    pub fn push(&mut self, time: f64, prio: u8, kind: K) {
        debug_assert!(time.is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry(Event { time, prio, seq, kind }));
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.0.time)
    }
}
