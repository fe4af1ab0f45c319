//! Discrete-event core: integer virtual clock, a `(time, sequence)` ordered
//! event queue, and named random streams.
//!
//! Time is kept in integer nanoseconds so slot periods (0.25 ms at
//! numerology 2) and millisecond inter-packet intervals are exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Virtual time in nanoseconds.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs clamp to zero.
    pub fn from_ms(ms: f64) -> Self {
        SimTime((ms * 1e6).round().max(0.0) as u64)
    }

    pub fn from_secs(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    pub sequence: u64,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.time, self.0.sequence)
    }
}

/// Single-threaded event scheduler.
///
/// Pop order is `(time, sequence)` ascending, where `sequence` is assigned
/// at scheduling time, so equal-time events run in the order they were
/// scheduled.
pub struct Engine<P> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    processed: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.0.time)
    }

    /// Schedules `payload` at absolute time `at`.
    ///
    /// Panics if `at` lies before the current clock: that can only come from a
    /// handler bug and the run is not recoverable.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> u64 {
        assert!(
            at >= self.now,
            "event scheduled in the past: at={at}, now={}",
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Queued(Event {
            time: at,
            sequence,
            payload,
        })));
        sequence
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> u64 {
        self.schedule(self.now + delay, payload)
    }

    /// Pops the next event if its time is `<= limit`, advancing the clock to it.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(Reverse(q)) if q.0.time <= limit => {}
            _ => return None,
        }
        let Reverse(Queued(ev)) = self.queue.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.processed += 1;
        Some(ev)
    }

    /// Processes every event with `time <= t_end`, then sets the clock to `t_end`.
    ///
    /// The handler may schedule further events; those at or before `t_end`
    /// are processed in the same call.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, Event<P>),
    {
        assert!(t_end >= self.now, "run_until target {t_end} is before now {}", self.now);
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.now = t_end;
    }
}

/// Named random streams used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    ChannelState,
    Shadowing,
    Blockage,
    PhyError,
}

impl Stream {
    pub const ALL: [Stream; 4] = [
        Stream::ChannelState,
        Stream::Shadowing,
        Stream::Blockage,
        Stream::PhyError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stream::ChannelState => "channel-state",
            Stream::Shadowing => "shadowing",
            Stream::Blockage => "blockage",
            Stream::PhyError => "phy-error",
        }
    }

    /// ChaCha stream id. Fixed forever: changing these changes every result.
    pub fn id(self) -> u64 {
        match self {
            Stream::ChannelState => 1,
            Stream::Shadowing => 2,
            Stream::Blockage => 3,
            Stream::PhyError => 4,
        }
    }

    pub fn from_name(name: &str) -> Option<Stream> {
        Stream::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Uniform01,
    StdNormal,
    Bernoulli(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum DrawError {
    #[error("Bernoulli probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
}

/// Independent generators, one per [`Stream`].
///
/// Every stream is ChaCha8 keyed by the run seed with its own 64-bit stream
/// id, so the keystreams never overlap and drawing from one stream leaves the
/// others untouched.
#[derive(Clone)]
pub struct RngStreams {
    streams: [ChaCha8Rng; 4],
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let make = |s: Stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s.id());
            rng
        };
        RngStreams {
            streams: Stream::ALL.map(make),
        }
    }

    fn rng(&mut self, stream: Stream) -> &mut ChaCha8Rng {
        let idx = Stream::ALL.iter().position(|s| *s == stream).unwrap();
        &mut self.streams[idx]
    }

    pub fn uniform(&mut self, stream: Stream) -> f64 {
        self.rng(stream).random::<f64>()
    }

    pub fn std_normal(&mut self, stream: Stream) -> f64 {
        self.rng(stream).sample(StandardNormal)
    }

    /// `true` with probability `p`. Uses one uniform `u` and returns `u < p`,
    /// so with a shared stream a larger `p` never turns a `true` into `false`.
    pub fn bernoulli(&mut self, stream: Stream, p: f64) -> Result<bool, DrawError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(DrawError::InvalidProbability(p));
        }
        Ok(self.uniform(stream) < p)
    }

    /// Generic draw; Bernoulli outcomes are returned as 0.0 / 1.0.
    pub fn draw(&mut self, stream: Stream, law: Law) -> Result<f64, DrawError> {
        match law {
            Law::Uniform01 => Ok(self.uniform(stream)),
            Law::StdNormal => Ok(self.std_normal(stream)),
            Law::Bernoulli(p) => Ok(if self.bernoulli(stream, p)? { 1.0 } else { 0.0 }),
        }
    }
}
