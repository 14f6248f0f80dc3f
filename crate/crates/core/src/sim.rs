//! Deterministic discrete-event engine.
//!
//! The [`Scheduler`] owns the simulation clock and a pending-event queue
//! ordered by `(time, insertion sequence)`, so events scheduled for the same
//! instant are dispatched first-in first-out. Time is kept in integer
//! nanoseconds. Every run owns one [`SimRng`]; all random draws of the run
//! go through it in dispatch order, which makes a run a pure function of its
//! seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A point in simulated time, or a duration, in whole nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);
    pub const MAX: Nanos = Nanos(u64::MAX);

    pub const fn from_micros(us: u64) -> Nanos {
        Nanos(us * 1_000)
    }

    /// Converts seconds to nanoseconds, rounding up to the next whole
    /// nanosecond.
    pub fn from_secs_ceil(secs: f64) -> Nanos {
        assert!(secs.is_finite() && secs >= 0.0, "invalid duration {secs}");
        let ns = secs * 1e9;
        // absorb representation noise so exact values are not bumped
        let rounded = ns.round();
        if (ns - rounded).abs() < 1e-6 {
            Nanos(rounded as u64)
        } else {
            Nanos(ns.ceil() as u64)
        }
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl Mul<u64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: u64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Identity of a node (station or access point) in a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// A node puts a frame on the air.
    TransmissionStart,
    /// A node finishes putting a frame on the air.
    TransmissionEnd,
    /// The leading edge of a frame reaches the nodes that hear its source.
    ReceptionStart,
    /// The trailing edge of a frame reaches the nodes that hear its source.
    ReceptionEnd,
    TimerExpiry,
    /// A backoff countdown reached zero on a slot boundary.
    SlotBoundary,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TransmissionStart => "TransmissionStart",
            EventKind::TransmissionEnd => "TransmissionEnd",
            EventKind::ReceptionStart => "ReceptionStart",
            EventKind::ReceptionEnd => "ReceptionEnd",
            EventKind::TimerExpiry => "TimerExpiry",
            EventKind::SlotBoundary => "SlotBoundary",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "TransmissionStart" => EventKind::TransmissionStart,
            "TransmissionEnd" => EventKind::TransmissionEnd,
            "ReceptionStart" => EventKind::ReceptionStart,
            "ReceptionEnd" => EventKind::ReceptionEnd,
            "TimerExpiry" => EventKind::TimerExpiry,
            "SlotBoundary" => EventKind::SlotBoundary,
            other => return Err(format!("unknown event kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub time: Nanos,
    pub kind: EventKind,
    pub subject: NodeId,
    pub payload: P,
}

impl<P> SimEvent<P> {
    pub fn new(time: Nanos, kind: EventKind, subject: NodeId, payload: P) -> Self {
        SimEvent {
            time,
            kind,
            subject,
            payload,
        }
    }
}

/// Returned by [`Scheduler::schedule`]; lets the caller cancel the event
/// before it is dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHandle {
    slot: u32,
    seq: u64,
}

#[derive(Debug, PartialEq, Eq)]
struct Pending {
    time: Nanos,
    seq: u64,
    slot: u32,
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, seq)
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Slot<P> {
    seq: u64,
    event: Option<SimEvent<P>>,
}

/// Pending-event queue plus simulation clock.
///
/// Cancelled events stay in the heap until they surface and are skipped;
/// slots are recycled so memory tracks the number of live events.
pub struct Scheduler<P> {
    clock: Nanos,
    next_seq: u64,
    heap: BinaryHeap<Pending>,
    slots: Vec<Slot<P>>,
    free: Vec<u32>,
    live: usize,
    dispatched: u64,
    trace: Option<EventTrace>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            clock: Nanos::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            free: Vec::new(),
            live: 0,
            dispatched: 0,
            trace: None,
        }
    }

    /// Starts recording every dispatched event.
    pub fn enable_trace(&mut self) {
        if self.trace.is_none() {
            self.trace = Some(EventTrace::default());
        }
    }

    pub fn now(&self) -> Nanos {
        self.clock
    }

    /// Number of events waiting to be dispatched (cancelled ones excluded).
    pub fn pending(&self) -> usize {
        self.live
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Inserts an event into the pending queue.
    ///
    /// # Panics
    ///
    /// Scheduling an event earlier than the current clock is a logic error
    /// in the caller and panics.
    pub fn schedule(&mut self, event: SimEvent<P>) -> EventHandle {
        assert!(
            event.time >= self.clock,
            "event scheduled in the past: {} < clock {}",
            event.time,
            self.clock
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        let time = event.time;
        let slot = match self.free.pop() {
            Some(idx) => {
                let s = &mut self.slots[idx as usize];
                s.seq = seq;
                s.event = Some(event);
                idx
            }
            None => {
                self.slots.push(Slot {
                    seq,
                    event: Some(event),
                });
                (self.slots.len() - 1) as u32
            }
        };
        self.heap.push(Pending { time, seq, slot });
        self.live += 1;
        EventHandle { slot, seq }
    }

    /// Removes a pending event. Returns `false` if it was already dispatched
    /// or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        match self.slots.get_mut(handle.slot as usize) {
            Some(s) if s.seq == handle.seq && s.event.is_some() => {
                s.event = None;
                self.free.push(handle.slot);
                self.live -= 1;
                true
            }
            _ => false,
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        matches!(self.slots.get(handle.slot as usize),
            Some(s) if s.seq == handle.seq && s.event.is_some())
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<Nanos> {
        while let Some(top) = self.heap.peek() {
            let s = &self.slots[top.slot as usize];
            if s.seq == top.seq && s.event.is_some() {
                return Some(top.time);
            }
            self.heap.pop();
        }
        None
    }

    /// Dispatches the next event if its time is at most `t_end`, advancing
    /// the clock to the event time.
    pub fn pop_until(&mut self, t_end: Nanos) -> Option<SimEvent<P>>
    where
        P: fmt::Display,
    {
        let next = self.peek_time()?;
        if next > t_end {
            return None;
        }
        let top = self.heap.pop().expect("peeked entry");
        let event = self.slots[top.slot as usize]
            .event
            .take()
            .expect("live slot");
        self.free.push(top.slot);
        self.live -= 1;
        debug_assert!(event.time >= self.clock);
        self.clock = event.time;
        self.dispatched += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time_ns: event.time.0,
                kind: event.kind,
                subject: event.subject.0,
                detail: event.payload.to_string(),
            });
        }
        Some(event)
    }

    /// Dispatches every event with time ≤ `t_end` to `handler`, then sets the
    /// clock to `t_end`. Returns the records dispatched during this call
    /// (empty unless tracing is enabled).
    pub fn run_until<F>(&mut self, t_end: Nanos, mut handler: F) -> EventTrace
    where
        P: fmt::Display,
        F: FnMut(&mut Self, SimEvent<P>),
    {
        assert!(t_end >= self.clock, "run_until into the past");
        let mark = self.trace.as_ref().map_or(0, |t| t.records.len());
        while let Some(event) = self.pop_until(t_end) {
            handler(self, event);
        }
        self.clock = t_end;
        match self.trace.as_ref() {
            Some(t) => EventTrace {
                records: t.records[mark..].to_vec(),
            },
            None => EventTrace::default(),
        }
    }

    pub fn trace(&self) -> Option<&EventTrace> {
        self.trace.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<EventTrace> {
        self.trace.take()
    }
}

/// One dispatched event, as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub kind: EventKind,
    pub subject: usize,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.time_ns, self.kind, self.subject, self.detail
        )
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.splitn(4, ',');
        let mut next = |what: &str| {
            parts
                .next()
                .ok_or_else(|| format!("trace line missing {what}: `{line}`"))
        };
        let time_ns = next("time")?.parse().map_err(|e| format!("{e}"))?;
        let kind = next("kind")?.parse()?;
        let subject = next("subject")?.parse().map_err(|e| format!("{e}"))?;
        let detail = next("detail")?.to_string();
        Ok(TraceRecord {
            time_ns,
            kind,
            subject,
            detail,
        })
    }
}

/// Ordered list of dispatched events, serialized one record per line as
/// `time_ns,kind,subject,detail`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("trace is utf-8")
    }

    pub fn parse(text: &str) -> Result<EventTrace, String> {
        let records = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        Ok(EventTrace { records })
    }
}

/// The single pseudo-random source of a run.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    draws: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            seed,
            draws: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of values drawn so far.
    pub fn position(&self) -> u64 {
        self.draws
    }

    /// Uniform integer in `[lo, hi]`.
    ///
    /// # Panics
    ///
    /// Panics if `lo > hi`.
    pub fn draw_uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "draw_uniform_int: empty range [{lo}, {hi}]");
        self.draws += 1;
        self.inner.gen_range(lo..=hi)
    }

    /// Uniform index in `0..len`.
    pub fn draw_index(&mut self, len: usize) -> usize {
        assert!(len > 0, "draw_index on empty range");
        self.draw_uniform_int(0, len as u64 - 1) as usize
    }
}
