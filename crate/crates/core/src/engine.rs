//! Discrete-event core: simulation clock, a priority event queue ordered by
//! `(fire_at, sequence)`, and seeded random streams.
//!
//! A run is strictly single-threaded. Handlers receive the queue mutably so
//! they can schedule follow-up events; the clock only moves forward.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulation time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input; a bad timestamp is a bug in
    /// the caller, never a recoverable condition.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulation time must be finite and non-negative, got {secs}"
        );
        // + 0.0 folds -0.0 into 0.0 so equality agrees with total_cmp.
        SimTime(secs + 0.0)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// `self + delta`, where `delta` is a non-negative duration in seconds.
    pub fn after(self, delta: f64) -> Self {
        SimTime::from_secs(self.0 + delta)
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
        write!(f, "{:.9}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule event at t={at} before current clock t={now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("cannot run backwards: horizon t={horizon} is before clock t={now}")]
    HorizonInPast { horizon: SimTime, now: SimTime },
}

/// Handle returned by [`EventQueue::schedule`]; the insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

/// A timestamped payload in the queue.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub payload: P,
}

impl<P> PartialEq for SimEvent<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<P> Eq for SimEvent<P> {}

impl<P> PartialOrd for SimEvent<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for SimEvent<P> {
    // Reversed so that BinaryHeap (a max-heap) pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Priority queue plus clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<SimEvent<P>>,
    now: SimTime,
    next_sequence: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_sequence: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::ScheduledInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(SimEvent {
            fire_at,
            sequence,
            payload,
        });
        Ok(EventHandle(sequence))
    }

    /// Pops the next event if it fires at or before `horizon`, advancing the
    /// clock to its timestamp.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<SimEvent<P>> {
        if self.heap.peek()?.fire_at > horizon {
            return None;
        }
        let event = self.heap.pop()?;
        self.now = event.fire_at;
        Some(event)
    }

    /// Processes every event with `fire_at <= horizon` in `(fire_at, sequence)`
    /// order, then leaves the clock at `horizon`. Returns the number of events
    /// handled.
    pub fn run_until<E, F>(&mut self, horizon: SimTime, mut handler: F) -> Result<usize, E>
    where
        E: From<EngineError>,
        F: FnMut(&mut Self, SimEvent<P>) -> Result<(), E>,
    {
        if horizon < self.now {
            return Err(EngineError::HorizonInPast {
                horizon,
                now: self.now,
            }
            .into());
        }
        let mut processed = 0;
        while let Some(event) = self.pop_until(horizon) {
            handler(self, event)?;
            processed += 1;
        }
        self.now = horizon;
        Ok(processed)
    }
}

/// One random stream per concern. Substreams (e.g. one per node) share a
/// concern but never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    /// Initial node positions.
    InitialPositions,
    /// Waypoint destinations of a single node.
    Mobility(u32),
    /// Per-hop processing jitter.
    Jitter,
    /// Attacker choice and attacker positions.
    Placement,
    /// Group membership (sender and receivers).
    Traffic,
    /// Attacker coin flips (blackhole drops).
    Attack,
}

impl StreamId {
    fn raw(self) -> u64 {
        match self {
            StreamId::InitialPositions => 1,
            StreamId::Jitter => 2,
            StreamId::Placement => 3,
            StreamId::Traffic => 4,
            StreamId::Attack => 5,
            StreamId::Mobility(node) => (1 << 32) | u64::from(node),
        }
    }
}

/// A reproducible random stream keyed by `(seed, stream)`.
///
/// Sequential draws come from a ChaCha8 keystream. Keyed draws
/// ([`RngStream::uniform_at`]) address the same keystream at a position
/// derived from a caller-supplied key, so the value a node draws for a given
/// packet does not depend on how many other draws happened before it.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.raw());
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Uniform draw in `[lo, hi)`; `lo == hi` returns `lo`.
    pub fn draw_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let unit = self.rng.gen::<f64>();
        scale_unit(unit, lo, hi)
    }

    /// Keyed uniform draw in `[lo, hi)`. Same `(seed, stream, key)` always
    /// yields the same value; does not disturb the sequential position.
    pub fn uniform_at(&self, key: u64, lo: f64, hi: f64) -> f64 {
        let mut rng = self.rng.clone();
        // Two 32-bit words per f64; the extra headroom keeps keys disjoint.
        rng.set_word_pos(u128::from(mix64(key)) << 2);
        scale_unit(rng.gen::<f64>(), lo, hi)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Partial Fisher-Yates: moves a uniform random `k`-subset (in random
    /// order) to the front of `items`.
    pub fn shuffle_prefix<T>(&mut self, items: &mut [T], k: usize) {
        let n = items.len();
        for i in 0..k.min(n) {
            let span = (n - i) as f64;
            let j = i + (self.draw_uniform(0.0, span) as usize).min(n - i - 1);
            items.swap(i, j);
        }
    }
}

fn scale_unit(unit: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "draw_uniform requires lo <= hi, got [{lo}, {hi})");
    if lo == hi {
        return lo;
    }
    let v = lo + (hi - lo) * unit;
    // Rounding can land exactly on `hi`.
    if v >= hi {
        hi.next_down()
    } else {
        v
    }
}

/// SplitMix64 finalizer: a fixed bijective mix, stable across platforms.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine several words into one draw key.
pub fn draw_key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5151_5151_5151_5151u64, |acc, &p| mix64(acc ^ p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn drain(q: &mut EventQueue<&'static str>, horizon: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        q.run_until::<EngineError, _>(t(horizon), |_, ev| {
            out.push(ev.payload);
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn dequeues_by_time() {
        let mut q = EventQueue::new();
        q.schedule(t(5.0), "e1").unwrap();
        q.schedule(t(3.0), "e2").unwrap();
        assert_eq!(drain(&mut q, 10.0), vec!["e2", "e1"]);
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut q = EventQueue::new();
        q.schedule(t(4.0), "e1").unwrap();
        q.schedule(t(4.0), "e2").unwrap();
        assert_eq!(drain(&mut q, 10.0), vec!["e1", "e2"]);
    }

    #[test]
    fn rejects_past_events() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until::<EngineError, _>(t(2.0), |_, _| Ok(())).unwrap();
        let err = q.schedule(t(1.0), ()).unwrap_err();
        assert_eq!(
            err,
            EngineError::ScheduledInPast {
                at: t(1.0),
                now: t(2.0)
            }
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        let n = q.run_until::<EngineError, _>(t(10.0), |_, _| Ok(())).unwrap();
        assert_eq!(n, 0);
        assert_eq!(q.now(), t(10.0));
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut q = EventQueue::new();
        for (s, name) in [(1.0, "a"), (2.0, "b"), (3.0, "c")] {
            q.schedule(t(s), name).unwrap();
        }
        assert_eq!(drain(&mut q, 2.0), vec!["a", "b"]);
        assert_eq!(q.now(), t(2.0));
        assert_eq!(q.len(), 1);
        assert!(q
            .run_until::<EngineError, _>(t(1.0), |_, _| Ok(()))
            .is_err());
    }

    #[test]
    fn handlers_can_schedule_followups() {
        let mut q = EventQueue::new();
        q.schedule(t(0.0), 0u32).unwrap();
        let mut seen = Vec::new();
        q.run_until::<EngineError, _>(t(5.0), |q, ev| {
            seen.push((ev.fire_at.secs(), ev.payload));
            if ev.payload < 10 {
                q.schedule(ev.fire_at.after(1.0), ev.payload + 1)?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 6);
        assert_eq!(seen.last(), Some(&(5.0, 5)));
    }

    #[test]
    fn degenerate_interval() {
        let mut s = RngStream::new(1, StreamId::Jitter);
        assert_eq!(s.draw_uniform(0.4, 0.4), 0.4);
        assert_eq!(s.uniform_at(9, 0.4, 0.4), 0.4);
    }

    #[test]
    #[should_panic]
    fn inverted_interval_panics() {
        let mut s = RngStream::new(1, StreamId::Jitter);
        s.draw_uniform(1.0, 0.0);
    }

    #[test]
    fn uniform_mean() {
        let mut s = RngStream::new(2024, StreamId::Traffic);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| s.draw_uniform(0.0, 1.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn streams_replay_and_differ() {
        let draw = |seed, id| {
            let mut s = RngStream::new(seed, id);
            (0..32).map(|_| s.draw_uniform(0.0, 1.0)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, StreamId::Jitter), draw(7, StreamId::Jitter));
        assert_ne!(draw(7, StreamId::Jitter), draw(7, StreamId::Traffic));
        assert_ne!(draw(7, StreamId::Mobility(0)), draw(7, StreamId::Mobility(1)));
        assert_ne!(draw(7, StreamId::Jitter), draw(8, StreamId::Jitter));
    }

    #[test]
    fn keyed_draws_are_order_independent() {
        let mut a = RngStream::new(3, StreamId::Jitter);
        let b = RngStream::new(3, StreamId::Jitter);
        let first = b.uniform_at(42, 0.0, 1.0);
        for _ in 0..100 {
            a.draw_uniform(0.0, 1.0);
        }
        assert_eq!(a.uniform_at(42, 0.0, 1.0), first);
        assert_ne!(b.uniform_at(43, 0.0, 1.0), first);
    }

    #[test]
    fn shuffle_prefix_is_a_permutation() {
        let mut s = RngStream::new(5, StreamId::Traffic);
        let mut v: Vec<u32> = (0..20).collect();
        s.shuffle_prefix(&mut v, 6);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        let mut again: Vec<u32> = (0..20).collect();
        RngStream::new(5, StreamId::Traffic).shuffle_prefix(&mut again, 6);
        assert_eq!(v, again);
    }

    #[test]
    fn keyed_draws_mean() {
        let s = RngStream::new(11, StreamId::Jitter);
        let n = 10_000u64;
        let mean = (0..n).map(|k| s.uniform_at(k, 0.0, 1.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }
}
