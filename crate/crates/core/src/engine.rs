//! Discrete-event core.
//!
//! A single global clock in integer nanoseconds and a queue of pending
//! events ordered by `(fire_at, seq)`. The sequence number is assigned at
//! scheduling time, so events that fire at the same instant run in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::fmt;
use std::ops::{Add, Sub};

use thiserror::Error;

/// Simulation time in nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: u64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("negative delay {0} ns")]
    NegativeDelay(i64),
    #[error("event scheduled in the past: at {at}, now {now}")]
    InPast { at: SimTime, now: SimTime },
    #[error("{0}")]
    Internal(String),
}

/// Handle returned by scheduling calls; used to cancel a pending event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    seq: u64,
}

impl EventHandle {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

struct Scheduled<E> {
    at: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Slots in the near-future wheel, one per nanosecond.
const WHEEL: usize = 1 << 13;
const MASK: u64 = WHEEL as u64 - 1;

/// The event queue plus the clock.
///
/// Events due within `WHEEL` ns of `now` sit in a ring of per-nanosecond
/// FIFO slots; later ones wait in a heap and move into the ring as the
/// clock catches up. Since an event only enters its slot after every
/// earlier-scheduled event for the same instant, each slot stays in
/// `seq` order.
pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    wheel: Vec<VecDeque<(u64, E)>>,
    occupied: Vec<u64>,
    in_wheel: usize,
    far: BinaryHeap<Scheduled<E>>,
    cancelled: HashSet<u64>,
    executed: u64,
    trace: Option<Vec<(SimTime, u64)>>,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            wheel: (0..WHEEL).map(|_| VecDeque::new()).collect(),
            occupied: vec![0; WHEEL / 64],
            in_wheel: 0,
            far: BinaryHeap::new(),
            cancelled: HashSet::new(),
            executed: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events executed so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn pending(&self) -> usize {
        self.in_wheel + self.far.len() - self.cancelled.len()
    }

    /// Record `(fire_at, seq)` of every executed event.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = if on { Some(Vec::new()) } else { None };
    }

    pub fn trace(&self) -> &[(SimTime, u64)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Schedule `event` to fire `delay_ns` after the current time.
    pub fn schedule(&mut self, delay_ns: i64, event: E) -> Result<EventHandle, EngineError> {
        if delay_ns < 0 {
            return Err(EngineError::NegativeDelay(delay_ns));
        }
        Ok(self.schedule_in(delay_ns as u64, event))
    }

    /// Infallible variant of [`Engine::schedule`] for non-negative delays.
    #[inline]
    pub fn schedule_in(&mut self, delay_ns: u64, event: E) -> EventHandle {
        let at = self.now.0 + delay_ns;
        self.push(at, event)
    }

    /// Schedule at an absolute time, which must not be before `now()`.
    pub fn schedule_at(&mut self, at: SimTime, event: E) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::InPast { at, now: self.now });
        }
        Ok(self.push(at.0, event))
    }

    #[inline]
    fn push(&mut self, at: u64, event: E) -> EventHandle {
        let seq = self.next_seq;
        self.next_seq += 1;
        if at - self.now.0 < WHEEL as u64 {
            self.put(at, seq, event);
        } else {
            self.far.push(Scheduled { at, seq, event });
        }
        EventHandle { seq }
    }

    #[inline]
    fn put(&mut self, at: u64, seq: u64, event: E) {
        let slot = (at & MASK) as usize;
        self.wheel[slot].push_back((seq, event));
        self.occupied[slot / 64] |= 1 << (slot % 64);
        self.in_wheel += 1;
    }

    /// Move heap events that now fall inside the wheel window.
    #[inline]
    fn pull_far(&mut self) {
        let limit = self.now.0 + WHEEL as u64;
        while self.far.peek().is_some_and(|s| s.at < limit) {
            let s = self.far.pop().expect("peeked");
            self.put(s.at, s.seq, s.event);
        }
    }

    /// First occupied slot at or after `now`, as a time.
    fn next_wheel_time(&self) -> u64 {
        let start = (self.now.0 & MASK) as usize;
        let words = self.occupied.len();
        let (w0, b0) = (start / 64, start % 64);
        let first = self.occupied[w0] & (!0u64 << b0);
        let slot = if first != 0 {
            w0 * 64 + first.trailing_zeros() as usize
        } else {
            let mut found = None;
            for k in 1..=words {
                let w = (w0 + k) % words;
                let bits = if k == words { self.occupied[w] & !(!0u64 << b0) } else { self.occupied[w] };
                if bits != 0 {
                    found = Some(w * 64 + bits.trailing_zeros() as usize);
                    break;
                }
            }
            found.expect("wheel count says non-empty")
        };
        self.now.0 + ((slot as u64).wrapping_sub(start as u64) & MASK)
    }

    /// Cancel a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.seq >= self.next_seq {
            return false;
        }
        let queued = self.far.iter().any(|s| s.seq == handle.seq)
            || self.wheel.iter().any(|q| q.iter().any(|(seq, _)| *seq == handle.seq));
        if !queued {
            return false;
        }
        self.cancelled.insert(handle.seq)
    }

    /// Remove the next event, advance the clock to its time and return it.
    #[inline]
    pub fn pop(&mut self) -> Option<E> {
        loop {
            let (at, seq, event) = if self.in_wheel > 0 {
                let at = self.next_wheel_time();
                let slot = (at & MASK) as usize;
                let q = &mut self.wheel[slot];
                let (seq, event) = q.pop_front().expect("occupied slot");
                if q.is_empty() {
                    self.occupied[slot / 64] &= !(1 << (slot % 64));
                }
                self.in_wheel -= 1;
                (at, seq, event)
            } else {
                let s = self.far.pop()?;
                (s.at, s.seq, s.event)
            };
            debug_assert!(at >= self.now.0);
            self.now = SimTime(at);
            self.pull_far();
            if !self.cancelled.is_empty() && self.cancelled.remove(&seq) {
                continue;
            }
            self.executed += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push((self.now, seq));
            }
            return Some(event);
        }
    }

    /// Execute events in order until the queue is empty; returns the final
    /// clock value. The handler may schedule further events.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<SimTime, EngineError>
    where
        F: FnMut(&mut Engine<E>, E) -> Result<(), EngineError>,
    {
        while let Some(ev) = self.pop() {
            handler(self, ev)?;
        }
        Ok(self.now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_queue_returns_zero() {
        let mut e: Engine<u32> = Engine::new();
        assert_eq!(e.now(), SimTime::ZERO);
        assert_eq!(e.run_until_idle(|_, _| Ok(())).unwrap(), SimTime::ZERO);
    }

    #[test]
    fn single_event_sets_final_clock() {
        let mut e = Engine::new();
        e.schedule(100, 7u32).unwrap();
        let mut seen = vec![];
        let end = e
            .run_until_idle(|eng, ev| {
                seen.push((eng.now().as_ns(), ev));
                Ok(())
            })
            .unwrap();
        assert_eq!(end, SimTime(100));
        assert_eq!(seen, vec![(100, 7)]);
        assert_eq!(e.now(), SimTime(100));
    }

    #[test]
    fn shorter_delay_pops_first() {
        let mut e = Engine::new();
        e.schedule(500, "late").unwrap();
        e.schedule(25, "early").unwrap();
        assert_eq!(e.pop(), Some("early"));
        assert_eq!(e.now(), SimTime(25));
        assert_eq!(e.pop(), Some("late"));
        assert_eq!(e.now(), SimTime(500));
    }

    #[test]
    fn zero_delay_fires_before_later_same_time_events() {
        let mut e = Engine::new();
        e.schedule(0, 1).unwrap();
        e.schedule(0, 2).unwrap();
        e.schedule(0, 3).unwrap();
        let order: Vec<i32> = std::iter::from_fn(|| e.pop()).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn negative_delay_rejected() {
        let mut e: Engine<()> = Engine::new();
        assert_eq!(e.schedule(-1, ()), Err(EngineError::NegativeDelay(-1)));
    }

    #[test]
    fn scheduling_into_the_past_aborts_the_run() {
        let mut e = Engine::new();
        e.schedule(100, 0u8).unwrap();
        let r = e.run_until_idle(|eng, _| eng.schedule_at(SimTime(50), 1).map(|_| ()));
        assert!(matches!(r, Err(EngineError::InPast { .. })));
    }

    #[test]
    fn cancelled_events_do_not_fire() {
        let mut e = Engine::new();
        let h = e.schedule(10, 'a').unwrap();
        e.schedule(20, 'b').unwrap();
        assert!(e.cancel(h));
        assert!(!e.cancel(h));
        assert_eq!(e.pending(), 1);
        assert_eq!(e.pop(), Some('b'));
        assert_eq!(e.pop(), None);
        assert!(!e.cancel(h));
    }

    #[test]
    fn now_inside_handler_is_fire_time() {
        let mut e = Engine::new();
        e.schedule(40, 40u64).unwrap();
        e.schedule(10, 10u64).unwrap();
        e.run_until_idle(|eng, t| {
            assert_eq!(eng.now().as_ns(), t);
            if t == 10 {
                eng.schedule(5, 15).unwrap();
            }
            Ok(())
        })
        .unwrap();
    }

    fn replay() -> Vec<(SimTime, u64)> {
        let mut e = Engine::new();
        e.record_trace(true);
        for i in 0..20u64 {
            e.schedule(((i * 37) % 11) as i64, i).unwrap();
        }
        e.run_until_idle(|eng, v| {
            if v < 200 {
                eng.schedule(((v * 13) % 7) as i64, v + 20)?;
            }
            Ok(())
        })
        .unwrap();
        e.trace().to_vec()
    }

    #[test]
    fn replay_gives_identical_trace() {
        let a = replay();
        let b = replay();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pop_order_is_time_then_seq(delays in proptest::collection::vec(0i64..1000, 1..200)) {
                let mut e = Engine::new();
                for (i, d) in delays.iter().enumerate() {
                    e.schedule(*d, i).unwrap();
                }
                let mut last: Option<(u64, usize)> = None;
                while let Some(i) = e.pop() {
                    let t = e.now().as_ns();
                    prop_assert_eq!(t, delays[i] as u64);
                    if let Some((lt, li)) = last {
                        prop_assert!(lt < t || (lt == t && li < i));
                    }
                    last = Some((t, i));
                }
            }

            #[test]
            fn matches_a_sorted_reference(
                script in proptest::collection::vec((0u64..3 * WHEEL as u64, 0usize..4), 1..300),
            ) {
                // each popped event schedules the next scripted ones; the
                // reference is a plain (time, seq) sort of the same pushes
                let mut e = Engine::new();
                let mut pending: Vec<(u64, u64)> = Vec::new();
                let mut next = 0usize;
                let mut seq = 0u64;
                let mut push = |e: &mut Engine<u64>, pending: &mut Vec<(u64, u64)>, d: u64| {
                    let h = e.schedule_in(d, seq);
                    pending.push((e.now().as_ns() + d, h.seq()));
                    seq += 1;
                };
                push(&mut e, &mut pending, script[0].0);
                next += 1;
                while let Some(v) = e.pop() {
                    pending.sort();
                    let (t, s) = pending.remove(0);
                    prop_assert_eq!((e.now().as_ns(), v), (t, s));
                    let fan = script[next.min(script.len() - 1)].1;
                    for _ in 0..fan {
                        if next < script.len() {
                            push(&mut e, &mut pending, script[next].0);
                            next += 1;
                        }
                    }
                }
                prop_assert!(pending.is_empty());
            }
        }
    }
}
