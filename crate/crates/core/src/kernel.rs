//! Event queue with virtual time.
//!
//! Events are ordered by `(time, seq)` where `seq` is assigned in scheduling
//! order, so two events at the same instant are delivered in the order they
//! were scheduled. Cancellation is lazy: a cancelled event stays in the heap
//! and is skipped when it reaches the front.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use crate::error::KernelError;

/// Virtual time in seconds. Always finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(value: f64) -> Result<Self, KernelError> {
        if value.is_finite() && value >= 0.0 {
            Ok(SimTime(value + 0.0))
        } else {
            Err(KernelError::InvalidTime(value))
        }
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Opaque handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// A delivered event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P> {
    time: SimTime,
    seq: u64,
    payload: P,
}

// BinaryHeap is a max-heap; invert so the smallest (time, seq) is on top.
impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq)).reverse()
    }
}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<P> Eq for Entry<P> {}

pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
    pending: HashSet<u64>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events that are scheduled and not cancelled.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, payload: P) -> Result<EventHandle, KernelError> {
        if time < self.now {
            return Err(KernelError::ScheduleInPast {
                at: time.seconds(),
                now: self.now.seconds(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.heap.push(Entry { time, seq, payload });
        Ok(EventHandle(seq))
    }

    /// Suppresses a pending event. Returns false if it was already delivered
    /// or already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Pops the next live event and advances virtual time to it.
    pub fn next(&mut self) -> Option<Event<P>> {
        while let Some(entry) = self.heap.pop() {
            if !self.pending.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.time >= self.now);
            self.now = entry.time;
            return Some(Event {
                time: entry.time,
                seq: entry.seq,
                payload: entry.payload,
            });
        }
        None
    }

    /// Time of the next live event without delivering it.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.heap.peek() {
            if self.pending.contains(&top.seq) {
                return Some(top.time);
            }
            self.heap.pop();
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> SimTime {
        SimTime::new(v).unwrap()
    }

    #[test]
    fn delivers_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(t(3.0), 'c').unwrap();
        q.schedule(t(1.0), 'a').unwrap();
        q.schedule(t(2.0), 'b').unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.next()).map(|e| e.payload).collect();
        assert_eq!(order, vec!['a', 'b', 'c']);
        assert!(q.next().is_none());
    }

    #[test]
    fn equal_times_follow_scheduling_order() {
        let mut q = EventQueue::new();
        let first = q.schedule(t(5.0), 1).unwrap();
        let second = q.schedule(t(5.0), 2).unwrap();
        assert!(first.seq() < second.seq());
        assert_eq!(q.next().unwrap().payload, 1);
        assert_eq!(q.next().unwrap().payload, 2);
    }

    #[test]
    fn schedule_in_future_then_pop() {
        let mut q = EventQueue::new();
        q.schedule(t(3.0), "now").unwrap();
        q.next().unwrap();
        q.schedule(t(5.0), "later").unwrap();
        let e = q.next().unwrap();
        assert_eq!(e.time, t(5.0));
        assert_eq!(q.now(), t(5.0));
    }

    #[test]
    fn scheduling_into_the_past_fails() {
        let mut q = EventQueue::new();
        q.schedule(t(3.0), ()).unwrap();
        q.next().unwrap();
        let err = q.schedule(t(2.0), ()).unwrap_err();
        assert!(matches!(err, KernelError::ScheduleInPast { .. }));
    }

    #[test]
    fn cancel_semantics() {
        let mut q = EventQueue::new();
        let h = q.schedule(t(1.0), 'x').unwrap();
        q.schedule(t(2.0), 'y').unwrap();
        assert!(q.cancel(h));
        assert!(!q.cancel(h));
        assert_eq!(q.next().unwrap().payload, 'y');

        let h2 = q.schedule(t(4.0), 'z').unwrap();
        assert_eq!(q.next().unwrap().payload, 'z');
        assert!(!q.cancel(h2));
        assert!(q.next().is_none());
    }

    #[test]
    fn empty_queue_is_exhausted() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.next().is_none());
        assert!(q.peek_time().is_none());
    }

    #[test]
    fn rejects_non_finite_time() {
        assert!(SimTime::new(f64::INFINITY).is_err());
        assert!(SimTime::new(-1.0).is_err());
        assert!(SimTime::new(f64::NAN).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn delivery_is_lexicographic(
                times in prop::collection::vec(0u32..20, 1..200),
                cancel_mask in prop::collection::vec(any::<bool>(), 200),
            ) {
                let mut q = EventQueue::new();
                let mut handles = Vec::new();
                for (i, &tm) in times.iter().enumerate() {
                    handles.push(q.schedule(t(tm as f64), i).unwrap());
                }
                let mut cancelled = HashSet::new();
                for (i, h) in handles.iter().enumerate() {
                    if cancel_mask[i] {
                        q.cancel(*h);
                        cancelled.insert(i);
                    }
                }
                let mut last: Option<(SimTime, u64)> = None;
                let mut delivered = 0;
                while let Some(e) = q.next() {
                    prop_assert!(!cancelled.contains(&e.payload));
                    if let Some(prev) = last {
                        prop_assert!((e.time, e.seq) > prev);
                    }
                    last = Some((e.time, e.seq));
                    delivered += 1;
                }
                prop_assert_eq!(delivered, times.len() - cancelled.len());
            }
        }
    }
}
