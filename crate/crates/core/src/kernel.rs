//! Virtual clock and event queue.
//!
//! Every other part of the simulator is driven from here. Time is an integer
//! count of milliseconds since system reset and only moves when the caller
//! advances it; nothing reads the wall clock. Events that share a timestamp
//! fire in the order they were scheduled.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Millis(pub u64);

impl Millis {
    pub const ZERO: Millis = Millis(0);

    pub fn as_u64(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: Millis) -> Millis {
        Millis(self.0.saturating_sub(other.0))
    }
}

impl Add<u64> for Millis {
    type Output = Millis;

    fn add(self, rhs: u64) -> Millis {
        Millis(self.0 + rhs)
    }
}

impl Sub for Millis {
    type Output = u64;

    fn sub(self, rhs: Millis) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("cannot schedule at {at}: clock already reads {now}")]
    PastDeadline { at: Millis, now: Millis },
    #[error("cannot advance to {target}: clock already reads {now}")]
    TimeReversal { target: Millis, now: Millis },
}

/// Identifies one scheduled event for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle {
    at: Millis,
    seq: u64,
}

impl EventHandle {
    pub fn at(&self) -> Millis {
        self.at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent<P> {
    pub at: Millis,
    pub seq: u64,
    pub payload: P,
}

/// Single-threaded discrete-event kernel over payload type `P`.
#[derive(Debug, Clone)]
pub struct Kernel<P> {
    now: Millis,
    next_seq: u64,
    pending: BTreeMap<(Millis, u64), P>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: Millis::ZERO,
            next_seq: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Timestamp of the earliest pending event.
    pub fn peek_next_at(&self) -> Option<Millis> {
        self.pending.keys().next().map(|&(at, _)| at)
    }

    pub fn schedule(&mut self, payload: P, at: Millis) -> Result<EventHandle, KernelError> {
        if at < self.now {
            return Err(KernelError::PastDeadline { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert((at, seq), payload);
        Ok(EventHandle { at, seq })
    }

    /// Returns true only if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&(handle.at, handle.seq)).is_some()
    }

    /// Pops the earliest event due at or before `t`, moving the clock to its
    /// timestamp. Returns `None` (and leaves the clock alone) when nothing is due.
    ///
    /// Driving the kernel with this in a loop lets the caller schedule new
    /// events between pops; an event scheduled for the current instant is
    /// returned by a later call in the same loop.
    pub fn pop_due(&mut self, t: Millis) -> Result<Option<TimedEvent<P>>, KernelError> {
        if t < self.now {
            return Err(KernelError::TimeReversal {
                target: t,
                now: self.now,
            });
        }
        let Some(entry) = self.pending.first_entry() else {
            return Ok(None);
        };
        let (at, seq) = *entry.key();
        if at > t {
            return Ok(None);
        }
        let payload = entry.remove();
        self.now = at;
        Ok(Some(TimedEvent { at, seq, payload }))
    }

    // Only valid once nothing is due at or before `t`.
    fn settle(&mut self, t: Millis) {
        debug_assert!(self.peek_next_at().is_none_or(|at| at > t));
        self.now = t;
    }

    /// Fires every event with `at <= t` in `(at, seq)` order, calling `on_fire`
    /// for each with the kernel clock set to the event's timestamp. The callback
    /// may schedule or cancel events; ones landing at or before `t` fire within
    /// this same call. Leaves the clock at `t`.
    pub fn advance_with<F>(&mut self, t: Millis, mut on_fire: F) -> Result<(), KernelError>
    where
        F: FnMut(&mut Self, TimedEvent<P>),
    {
        while let Some(ev) = self.pop_due(t)? {
            on_fire(self, ev);
        }
        self.settle(t);
        Ok(())
    }
}

impl<P: Clone> Kernel<P> {
    /// Fires everything due at or before `t` and returns the fired events in order.
    pub fn advance_until(&mut self, t: Millis) -> Result<Vec<TimedEvent<P>>, KernelError> {
        let mut fired = Vec::new();
        self.advance_with(t, |_, ev| fired.push(ev))?;
        Ok(fired)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Ev {
        A,
        B,
        Tag(u32),
    }

    #[test]
    fn zero_delay_fires_on_next_advance() {
        let mut k = Kernel::new();
        k.advance_until(Millis(300)).unwrap();
        k.schedule(Ev::A, k.now()).unwrap();
        let fired = k.advance_until(Millis(300)).unwrap();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].at, Millis(300));
    }

    #[test]
    fn boundary_is_inclusive() {
        let mut k = Kernel::new();
        k.schedule(Ev::A, Millis(10_000)).unwrap();
        let fired = k.advance_until(Millis(10_000)).unwrap();
        assert_eq!(fired.len(), 1);
        assert_eq!(k.now(), Millis(10_000));
    }

    #[test]
    fn same_instant_is_fifo() {
        let mut k = Kernel::new();
        k.schedule(Ev::A, Millis(100)).unwrap();
        k.schedule(Ev::B, Millis(100)).unwrap();
        let fired: Vec<_> = k
            .advance_until(Millis(100))
            .unwrap()
            .into_iter()
            .map(|e| e.payload)
            .collect();
        assert_eq!(fired, vec![Ev::A, Ev::B]);
    }

    #[test]
    fn past_deadline_rejected() {
        let mut k: Kernel<Ev> = Kernel::new();
        k.advance_until(Millis(50)).unwrap();
        assert_eq!(
            k.schedule(Ev::A, Millis(49)),
            Err(KernelError::PastDeadline {
                at: Millis(49),
                now: Millis(50)
            })
        );
    }

    #[test]
    fn time_reversal_rejected() {
        let mut k: Kernel<Ev> = Kernel::new();
        k.advance_until(Millis(50)).unwrap();
        assert!(matches!(
            k.advance_until(Millis(10)),
            Err(KernelError::TimeReversal { .. })
        ));
    }

    #[test]
    fn cancel_semantics() {
        let mut k = Kernel::new();
        let h = k.schedule(Ev::A, Millis(5)).unwrap();
        assert!(k.cancel(h));
        assert!(!k.cancel(h));

        let h = k.schedule(Ev::B, Millis(5)).unwrap();
        k.advance_until(Millis(5)).unwrap();
        assert!(!k.cancel(h));
    }

    #[test]
    fn cancel_middle_of_three() {
        let mut k = Kernel::new();
        k.schedule(Ev::Tag(1), Millis(10)).unwrap();
        let mid = k.schedule(Ev::Tag(2), Millis(20)).unwrap();
        k.schedule(Ev::Tag(3), Millis(30)).unwrap();
        assert!(k.cancel(mid));
        let fired: Vec<_> = k
            .advance_until(Millis(100))
            .unwrap()
            .into_iter()
            .map(|e| e.payload)
            .collect();
        assert_eq!(fired, vec![Ev::Tag(1), Ev::Tag(3)]);
    }

    #[test]
    fn empty_advance_moves_clock() {
        let mut k: Kernel<Ev> = Kernel::new();
        assert!(k.advance_until(Millis(500)).unwrap().is_empty());
        assert_eq!(k.now(), Millis(500));
    }

    #[test]
    fn events_at_100_100_50() {
        let mut k = Kernel::new();
        k.schedule(Ev::Tag(1), Millis(100)).unwrap();
        k.schedule(Ev::Tag(2), Millis(100)).unwrap();
        k.schedule(Ev::Tag(3), Millis(50)).unwrap();
        let fired: Vec<_> = k
            .advance_until(Millis(100))
            .unwrap()
            .into_iter()
            .map(|e| (e.at.0, e.payload))
            .collect();
        assert_eq!(
            fired,
            vec![(50, Ev::Tag(3)), (100, Ev::Tag(1)), (100, Ev::Tag(2))]
        );
    }

    #[test]
    fn callback_sees_event_time_and_same_instant_reschedule_fires() {
        let mut k = Kernel::new();
        k.schedule(Ev::A, Millis(40)).unwrap();
        let mut seen = Vec::new();
        k.advance_with(Millis(100), |k, ev| {
            assert_eq!(k.now(), ev.at);
            if ev.payload == Ev::A {
                k.schedule(Ev::B, k.now()).unwrap();
            }
            seen.push((ev.at.0, ev.payload));
        })
        .unwrap();
        assert_eq!(seen, vec![(40, Ev::A), (40, Ev::B)]);
        assert_eq!(k.now(), Millis(100));
    }
}
