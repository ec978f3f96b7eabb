use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Duration;

use locathe::time::Timestamp;

/// Discrete-event clock. Events at equal times pop in insertion order, which
/// keeps runs reproducible.
pub struct VirtualClock<E> {
    now: Timestamp,
    seq: u64,
    heap: BinaryHeap<Reverse<(Timestamp, u64)>>,
    events: BTreeMap<u64, E>,
}

impl<E> VirtualClock<E> {
    pub fn new(start: Timestamp) -> Self {
        VirtualClock { now: start, seq: 0, heap: BinaryHeap::new(), events: Default::default() }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Scheduling in the past clamps to now; time never runs backwards.
    pub fn schedule_at(&mut self, at: Timestamp, event: E) {
        let at = at.max(self.now);
        self.heap.push(Reverse((at, self.seq)));
        self.events.insert(self.seq, event);
        self.seq += 1;
    }

    pub fn schedule_in(&mut self, delay: Duration, event: E) {
        self.schedule_at(self.now + delay, event);
    }

    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        let Reverse((at, seq)) = self.heap.pop()?;
        self.now = at;
        let e = self.events.remove(&seq).expect("scheduled event present");
        Some((at, e))
    }

    pub fn pending(&self) -> impl Iterator<Item = &E> {
        self.events.values()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut c = VirtualClock::new(Timestamp::ZERO);
        c.schedule_at(Timestamp::from_secs(2), "b");
        c.schedule_at(Timestamp::from_secs(1), "a1");
        c.schedule_at(Timestamp::from_secs(1), "a2");
        let order: Vec<_> = std::iter::from_fn(|| c.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["a1", "a2", "b"]);
        assert_eq!(c.now(), Timestamp::from_secs(2));
    }

    #[test]
    fn past_events_clamp_to_now() {
        let mut c = VirtualClock::new(Timestamp::from_secs(5));
        c.schedule_at(Timestamp::from_secs(1), ());
        assert_eq!(c.pop().unwrap().0, Timestamp::from_secs(5));
    }
}
