//! Event-driven runtime: stations, access points and the shared medium.
//!
//! Every transmission produces four events: the sender's
//! `TransmissionStart`/`TransmissionEnd` and one `ReceptionStart`/
//! `ReceptionEnd` pair covering all listeners, which hear the frame one
//! propagation delay later. Backoff is evaluated lazily: a station schedules
//! a single `SlotBoundary` for the instant its counter reaches zero, and the
//! countdown is credited and cancelled whenever the medium turns busy.

use std::fmt;

use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::phy::{BandOccupancy, BandPlan, BandSet, Frame, FrameKind, NodeId, Receiver, Role, Timing, Topology};
use crate::scenarios::{ScenarioConfig, TrafficMode};
use crate::sim::{EventHandle, EventKind, EventTrace, Nanos, Scheduler, SimEvent, SimRng};

use super::{
    ap_resolve_rts, select_rts_bands, ApOutcome, ContentionOutcome, ContentionWindow, Countdown,
    Phase, ReceivedRts, StationState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacEvent {
    Transmit(Frame),
    TxEnd(Frame),
    Arrive(Frame),
    Depart(Frame),
    /// Backoff reached zero; `backoff` is the value drawn for this access,
    /// `None` for a direct attempt after DIFS.
    Access { cw: u32, backoff: Option<u32> },
    CtsTimeout,
    AckTimeout,
    /// Access point gives up waiting for DATA after its CTS.
    Watchdog,
}

impl fmt::Display for MacEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacEvent::Transmit(fr) | MacEvent::TxEnd(fr) | MacEvent::Arrive(fr) | MacEvent::Depart(fr) => {
                write!(f, "{fr}")
            }
            MacEvent::Access { cw, backoff: Some(b) } => write!(f, "access cw={cw} backoff={b}"),
            MacEvent::Access { cw, backoff: None } => write!(f, "access cw={cw} direct"),
            MacEvent::CtsTimeout => f.write_str("cts-timeout"),
            MacEvent::AckTimeout => f.write_str("ack-timeout"),
            MacEvent::Watchdog => f.write_str("watchdog"),
        }
    }
}

/// One resolved RTS window at an access point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub time: Nanos,
    pub ap: NodeId,
    pub rts: Vec<Frame>,
    pub decoded: Vec<NodeId>,
    pub outcome: ApOutcome,
    pub winner: Option<NodeId>,
}

#[derive(Debug, Clone, Copy)]
struct Attempt {
    rts_id: u64,
    /// Set by the destination when it resolves the window.
    decoded: Option<bool>,
}

#[derive(Debug)]
struct StationRt {
    state: StationState,
    countdown: Option<(Countdown, EventHandle)>,
    timer: Option<EventHandle>,
    attempt: Option<Attempt>,
    drawn: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ApPhase {
    Listening,
    Responding,
    AwaitData { winner: NodeId },
    ReceivingData { data_id: u64 },
    Acking,
}

#[derive(Debug)]
struct ApRt {
    phase: ApPhase,
    window: Vec<ReceivedRts>,
    window_open: usize,
    watchdog: Option<EventHandle>,
}

pub struct Network {
    topology: Topology,
    timing: Timing,
    plan: BandPlan,
    payload_bits: u32,
    nav_enabled: bool,
    traffic: Option<TrafficMode>,
    sched: Scheduler<MacEvent>,
    rng: SimRng,
    stations: Vec<Option<StationRt>>,
    aps: Vec<Option<ApRt>>,
    radios: Vec<Receiver>,
    next_frame: u64,
    metrics: RunMetrics,
    exchanges: u64,
    warmup: u64,
    target: u64,
    undelivered: usize,
    horizon: Nanos,
    t_start: Nanos,
    rounds: Option<Vec<RoundRecord>>,
    seed: u64,
}

impl Network {
    /// Builds the network with the scenario's traffic: every station holds
    /// a packet at time zero.
    pub fn new(cfg: &ScenarioConfig) -> Result<Network> {
        let mut net = Network::quiet(cfg)?;
        net.traffic = Some(cfg.traffic);
        for i in 0..net.stations.len() {
            if let Some(st) = net.stations[i].as_mut() {
                st.state.enqueue(Nanos::ZERO);
                st.state.start_contention(crate::phy::ChannelState::Idle, &mut net.rng);
                net.undelivered += 1;
            }
            if net.stations[i].is_some() {
                net.refresh(NodeId(i));
            }
        }
        Ok(net)
    }

    /// Builds the network with empty queues; nothing happens until frames
    /// are injected with [`Network::force_rts`].
    pub fn quiet(cfg: &ScenarioConfig) -> Result<Network> {
        cfg.validate()?;
        let timing = Timing::new(&cfg.phy)?;
        let plan = BandPlan::new(cfg.n_bands)?;
        let cw = ContentionWindow::new(cfg.cw_min, cfg.cw_max)?;
        let n = cfg.topology.len();
        let mut stations: Vec<Option<StationRt>> = (0..n).map(|_| None).collect();
        for s in &cfg.stations {
            stations[s.node.0] = Some(StationRt {
                state: StationState::new(
                    s.node,
                    s.destination,
                    cw,
                    s.rts_band_span,
                    cfg.traffic == TrafficMode::Saturation,
                ),
                countdown: None,
                timer: None,
                attempt: None,
                drawn: None,
            });
        }
        let aps = cfg
            .topology
            .nodes()
            .map(|id| {
                (cfg.topology.role(id) == Role::AccessPoint).then(|| ApRt {
                    phase: ApPhase::Listening,
                    window: Vec::new(),
                    window_open: 0,
                    watchdog: None,
                })
            })
            .collect();
        let mut sched = Scheduler::new();
        if cfg.trace {
            sched.enable_trace();
        }
        let (warmup, target) = match cfg.traffic {
            TrafficMode::Saturation => (cfg.warmup_exchanges, cfg.target_exchanges),
            TrafficMode::SinglePacket => (0, 0),
        };
        Ok(Network {
            topology: cfg.topology.clone(),
            timing,
            plan,
            payload_bits: cfg.phy.payload_bits,
            nav_enabled: cfg.nav_enabled,
            traffic: None,
            sched,
            rng: SimRng::new(cfg.seed),
            stations,
            aps,
            radios: vec![Receiver::default(); n],
            next_frame: 0,
            metrics: RunMetrics::default(),
            exchanges: 0,
            warmup,
            target,
            undelivered: 0,
            horizon: cfg.max_duration.map_or(Nanos::MAX, Nanos::from_secs_ceil),
            t_start: Nanos::ZERO,
            rounds: None,
            seed: cfg.seed,
        })
    }

    /// Runs a scenario to completion.
    pub fn simulate(cfg: &ScenarioConfig) -> Result<RunMetrics> {
        Network::new(cfg)?.run()
    }

    /// Keeps a [`RoundRecord`] for every resolved RTS window.
    pub fn record_rounds(&mut self) {
        self.rounds.get_or_insert_with(Vec::new);
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        self.rounds.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> Nanos {
        self.sched.now()
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    /// Completed exchanges, warm-up included.
    pub fn exchanges(&self) -> u64 {
        self.exchanges
    }

    pub fn station(&self, id: NodeId) -> Option<&StationState> {
        self.stations.get(id.0)?.as_ref().map(|s| &s.state)
    }

    pub fn trace(&self) -> Option<&EventTrace> {
        self.sched.trace()
    }

    pub fn take_trace(&mut self) -> Option<EventTrace> {
        self.sched.take_trace()
    }

    /// Makes `station` send an RTS on `bands` at time `at`, regardless of
    /// its backoff state. A packet is queued for it if it has none.
    pub fn force_rts(&mut self, station: NodeId, at: Nanos, bands: BandSet) -> Result<u64> {
        if bands.is_empty() || !bands.is_subset(self.plan.all()) {
            return Err(Error::config(format!("bands {bands} are outside the plan")));
        }
        let id = self.next_frame_id();
        let timing = self.timing;
        let st = self
            .stations
            .get_mut(station.0)
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::config(format!("node {station} is not a station")))?;
        if st.state.queue.is_empty() {
            st.state.enqueue(at);
        }
        if let Some((_, h)) = st.countdown.take() {
            self.sched.cancel(h);
        }
        st.state.phase = Phase::RtsSent;
        st.attempt = Some(Attempt {
            rts_id: id,
            decoded: None,
        });
        let frame = Frame {
            id,
            kind: FrameKind::Rts,
            source: station,
            destination: st.state.destination,
            bands,
            duration: timing.rts,
            nav: timing.rts_nav(),
        };
        self.schedule(at, EventKind::TransmissionStart, station, MacEvent::Transmit(frame));
        Ok(id)
    }

    /// Dispatches every event up to and including `t`.
    pub fn run_until(&mut self, t: Nanos) {
        while let Some(ev) = self.sched.pop_until(t) {
            self.dispatch(ev);
        }
    }

    /// Runs until the exchange target (saturation), until every packet is
    /// delivered (single packet), or until the duration limit.
    pub fn run(&mut self) -> Result<RunMetrics> {
        while !self.done() {
            match self.sched.pop_until(self.horizon) {
                Some(ev) => self.dispatch(ev),
                None => break,
            }
        }
        let end = if self.done() || self.horizon == Nanos::MAX {
            self.sched.now()
        } else {
            self.horizon
        };
        if !self.done() && self.horizon == Nanos::MAX {
            return Err(Error::RunFailed {
                stations: self.stations.iter().flatten().count(),
                bands: self.plan.n_bands(),
                seed: self.seed,
                reason: format!("no pending events after {} exchanges", self.exchanges),
            });
        }
        self.metrics.sim_duration = (end - self.t_start).as_secs();
        Ok(self.metrics.clone())
    }

    fn done(&self) -> bool {
        match self.traffic {
            Some(TrafficMode::Saturation) => self.exchanges >= self.warmup + self.target,
            Some(TrafficMode::SinglePacket) => self.undelivered == 0,
            None => false,
        }
    }

    fn next_frame_id(&mut self) -> u64 {
        let id = self.next_frame;
        self.next_frame += 1;
        id
    }

    fn schedule(&mut self, t: Nanos, kind: EventKind, subject: NodeId, ev: MacEvent) -> EventHandle {
        self.sched.schedule(SimEvent::new(t, kind, subject, ev))
    }

    fn dispatch(&mut self, ev: SimEvent<MacEvent>) {
        let who = ev.subject;
        match ev.payload {
            MacEvent::Transmit(frame) => self.on_transmit(frame),
            MacEvent::TxEnd(frame) => self.on_tx_end(frame),
            MacEvent::Arrive(frame) => self.on_arrive(frame),
            MacEvent::Depart(frame) => self.on_depart(frame),
            MacEvent::Access { .. } => self.on_access(who),
            MacEvent::CtsTimeout => self.on_cts_timeout(who),
            MacEvent::AckTimeout => self.on_ack_timeout(who),
            MacEvent::Watchdog => {
                let ap = self.aps[who.0].as_mut().expect("access point");
                ap.watchdog = None;
                if matches!(ap.phase, ApPhase::AwaitData { .. }) {
                    ap.phase = ApPhase::Listening;
                }
            }
        }
    }

    // ---- station side ----

    /// Re-evaluates a station's countdown after the medium or its NAV
    /// changed.
    fn refresh(&mut self, id: NodeId) {
        let now = self.sched.now();
        let timing = self.timing;
        let radio_busy = self.radios[id.0].is_busy();
        let quiet_since = self.radios[id.0].quiet_since();
        let st = self.stations[id.0].as_mut().expect("station");
        if let Some((cd, h)) = st.countdown {
            // a boundary at this very instant still fires
            if cd.expiry(&timing) == now && self.sched.is_pending(h) {
                return;
            }
            self.sched.cancel(h);
            st.countdown = None;
            st.state.backoff_counter = cd.remaining_at(now, &timing);
        }
        if !st.state.is_contending() {
            return;
        }
        if st.state.phase == Phase::Sensing && (radio_busy || st.state.nav_active(now)) {
            st.state.draw_backoff(&mut self.rng);
            st.drawn = Some(st.state.backoff_counter);
        }
        if radio_busy {
            return;
        }
        let quiet = quiet_since.max(st.state.nav_until);
        let cd = Countdown::resume(st.state.backoff_counter, quiet, now, &timing);
        let ev = MacEvent::Access {
            cw: st.state.cw.value(),
            backoff: st.drawn,
        };
        let h = self
            .sched
            .schedule(SimEvent::new(cd.expiry(&timing), EventKind::SlotBoundary, id, ev));
        st.countdown = Some((cd, h));
    }

    fn on_access(&mut self, id: NodeId) {
        let now = self.sched.now();
        let frame_id = self.next_frame_id();
        let timing = self.timing;
        let st = self.stations[id.0].as_mut().expect("station");
        st.countdown = None;
        if !st.state.is_contending() {
            return;
        }
        let bands = select_rts_bands(st.state.rts_band_span, &self.plan, &mut self.rng)
            .expect("span validated with the scenario");
        st.state.phase = Phase::RtsSent;
        st.state.backoff_counter = 0;
        st.attempt = Some(Attempt {
            rts_id: frame_id,
            decoded: None,
        });
        let frame = Frame {
            id: frame_id,
            kind: FrameKind::Rts,
            source: id,
            destination: st.state.destination,
            bands,
            duration: timing.rts,
            nav: timing.rts_nav(),
        };
        self.schedule(now, EventKind::TransmissionStart, id, MacEvent::Transmit(frame));
    }

    fn apply_outcome(&mut self, id: NodeId, outcome: ContentionOutcome) {
        let now = self.sched.now();
        let st = self.stations[id.0].as_mut().expect("station");
        if let Some(h) = st.timer.take() {
            self.sched.cancel(h);
        }
        st.attempt = None;
        let delay = st.state.on_contention_outcome(outcome, now, &mut self.rng);
        st.drawn = (st.state.phase == Phase::Backoff).then_some(st.state.backoff_counter);
        if let Some(delay) = delay {
            self.metrics.record_delivery(self.payload_bits, delay.as_secs());
            self.exchanges += 1;
            self.undelivered = self.undelivered.saturating_sub(1);
            if self.exchanges == self.warmup && self.warmup > 0 {
                self.metrics = RunMetrics::default();
                self.t_start = now;
            }
        }
    }

    fn on_cts_timeout(&mut self, id: NodeId) {
        let st = self.stations[id.0].as_mut().expect("station");
        st.timer = None;
        if st.state.phase != Phase::AwaitCts {
            return;
        }
        let decoded = st.attempt.and_then(|a| a.decoded) == Some(true);
        self.metrics.record_attempt(!decoded);
        let outcome = if decoded {
            ContentionOutcome::CtsTimeout
        } else {
            ContentionOutcome::RtsCollided
        };
        self.apply_outcome(id, outcome);
        self.refresh(id);
    }

    fn on_ack_timeout(&mut self, id: NodeId) {
        let st = self.stations[id.0].as_mut().expect("station");
        st.timer = None;
        if st.state.phase != Phase::AwaitAck {
            return;
        }
        self.apply_outcome(id, ContentionOutcome::AckTimeout);
        self.refresh(id);
    }

    /// A complete frame reached a station.
    fn station_receive(&mut self, id: NodeId, frame: Frame) {
        let now = self.sched.now();
        let nav_enabled = self.nav_enabled;
        let st = self.stations[id.0].as_mut().expect("station");
        let from_my_receiver = frame.source == st.state.destination;
        match frame.kind {
            FrameKind::Cts if frame.destination == id => {
                if st.state.phase == Phase::AwaitCts && from_my_receiver {
                    if let Some(h) = st.timer.take() {
                        self.sched.cancel(h);
                    }
                    self.metrics.record_attempt(false);
                    st.state.phase = Phase::Transmitting;
                    let data = Frame {
                        id: self.next_frame,
                        kind: FrameKind::Data,
                        source: id,
                        destination: st.state.destination,
                        bands: self.plan.all(),
                        duration: self.timing.data,
                        nav: self.timing.sifs + self.timing.ack + self.timing.prop,
                    };
                    self.next_frame += 1;
                    let t = now + self.timing.sifs;
                    self.schedule(t, EventKind::TransmissionStart, id, MacEvent::Transmit(data));
                }
            }
            FrameKind::Ack if frame.destination == id => {
                if st.state.phase == Phase::AwaitAck && from_my_receiver {
                    self.apply_outcome(id, ContentionOutcome::GrantedAndAcked);
                }
            }
            FrameKind::Ack => {}
            _ if frame.destination == id => {}
            _ => {
                if nav_enabled {
                    st.state.apply_nav(frame.nav, now);
                }
                if frame.kind == FrameKind::Cts && st.state.phase == Phase::AwaitCts && from_my_receiver {
                    let decoded = st.attempt.and_then(|a| a.decoded) == Some(true);
                    self.metrics.record_attempt(!decoded);
                    let outcome = if decoded {
                        ContentionOutcome::DecodedNotChosen
                    } else {
                        ContentionOutcome::RtsCollided
                    };
                    self.apply_outcome(id, outcome);
                }
            }
        }
    }

    // ---- access point side ----

    fn ap_arrive(&mut self, id: NodeId, frame: Frame) {
        let radio = &self.radios[id.0];
        let ap = self.aps[id.0].as_mut().expect("access point");
        match ap.phase {
            ApPhase::Listening => {
                if frame.kind == FrameKind::Rts {
                    let damaged = radio.active().iter().any(|rx| rx.frame.kind != FrameKind::Rts);
                    ap.window.push(ReceivedRts { frame, intact: !damaged });
                    ap.window_open += 1;
                } else {
                    for r in &mut ap.window {
                        if radio.active().iter().any(|rx| rx.frame.id == r.frame.id) {
                            r.intact = false;
                        }
                    }
                }
            }
            ApPhase::AwaitData { winner } => {
                if frame.kind == FrameKind::Data && frame.source == winner && frame.destination == id {
                    if let Some(h) = ap.watchdog.take() {
                        self.sched.cancel(h);
                    }
                    ap.phase = ApPhase::ReceivingData { data_id: frame.id };
                }
            }
            _ => {}
        }
    }

    fn ap_depart(&mut self, id: NodeId, frame: Frame, intact: bool, collided: bool, missed: bool) {
        let now = self.sched.now();
        if frame.kind == FrameKind::Data && frame.destination == id && collided {
            self.metrics.data_collisions += 1;
        }
        let ap = self.aps[id.0].as_mut().expect("access point");
        match ap.phase {
            ApPhase::Listening if frame.kind == FrameKind::Rts => {
                if let Some(r) = ap.window.iter_mut().find(|r| r.frame.id == frame.id) {
                    r.intact &= !missed;
                    ap.window_open -= 1;
                    if ap.window_open == 0 {
                        self.resolve(id);
                    }
                }
            }
            ApPhase::ReceivingData { data_id } if data_id == frame.id => {
                if intact {
                    ap.phase = ApPhase::Acking;
                    let ack = Frame {
                        id: self.next_frame,
                        kind: FrameKind::Ack,
                        source: id,
                        destination: frame.source,
                        bands: self.plan.all(),
                        duration: self.timing.ack,
                        nav: Nanos::ZERO,
                    };
                    self.next_frame += 1;
                    let t = now + self.timing.sifs;
                    self.schedule(t, EventKind::TransmissionStart, id, MacEvent::Transmit(ack));
                } else {
                    ap.phase = ApPhase::Listening;
                }
            }
            _ => {}
        }
    }

    fn resolve(&mut self, id: NodeId) {
        let now = self.sched.now();
        let ap = self.aps[id.0].as_mut().expect("access point");
        let window = std::mem::take(&mut ap.window);
        let occ = BandOccupancy::from_frames(self.plan.n_bands(), window.iter().map(|r| &r.frame));
        let decision = ap_resolve_rts(id, &occ, &window, &mut self.rng);
        self.metrics.record_round(window.len(), decision.decoded.len());
        for r in window.iter().filter(|r| r.frame.destination == id) {
            if let Some(st) = self.stations[r.frame.source.0].as_mut() {
                if let Some(a) = st.attempt.as_mut().filter(|a| a.rts_id == r.frame.id) {
                    a.decoded = Some(decision.decoded.iter().any(|f| f.id == r.frame.id));
                }
            }
        }
        match decision.outcome {
            ApOutcome::Grant => {
                let winner = decision.winner.expect("grant names a winner");
                ap.phase = ApPhase::Responding;
                let cts = Frame {
                    id: self.next_frame,
                    kind: FrameKind::Cts,
                    source: id,
                    destination: winner,
                    bands: self.plan.all(),
                    duration: self.timing.cts,
                    nav: self.timing.cts_nav(),
                };
                self.next_frame += 1;
                let t = now + self.timing.sifs;
                self.schedule(t, EventKind::TransmissionStart, id, MacEvent::Transmit(cts));
            }
            ApOutcome::VirtualCollision => self.metrics.virtual_collisions += 1,
            _ => {}
        }
        if let Some(log) = self.rounds.as_mut() {
            log.push(RoundRecord {
                time: now,
                ap: id,
                rts: window.iter().map(|r| r.frame).collect(),
                decoded: decision.decoded.iter().map(|f| f.source).collect(),
                outcome: decision.outcome,
                winner: decision.winner,
            });
        }
    }

    // ---- medium ----

    fn on_transmit(&mut self, frame: Frame) {
        let now = self.sched.now();
        let src = frame.source;
        self.radios[src.0].start_tx();
        match frame.kind {
            FrameKind::Rts => {}
            FrameKind::Cts => self.metrics.cts_sent += 1,
            FrameKind::Data => self.metrics.data_sent += 1,
            FrameKind::Ack => self.metrics.acks_sent += 1,
        }
        let prop = self.timing.prop;
        self.schedule(now + frame.duration, EventKind::TransmissionEnd, src, MacEvent::TxEnd(frame));
        self.schedule(now + prop, EventKind::ReceptionStart, src, MacEvent::Arrive(frame));
        self.schedule(
            now + prop + frame.duration,
            EventKind::ReceptionEnd,
            src,
            MacEvent::Depart(frame),
        );
    }

    fn on_tx_end(&mut self, frame: Frame) {
        let now = self.sched.now();
        let src = frame.source;
        self.radios[src.0].end_tx(now);
        let t = self.timing;
        if let Some(st) = self.stations[src.0].as_mut() {
            let (phase, wait, timer) = match frame.kind {
                FrameKind::Rts => (Phase::AwaitCts, t.sifs + t.cts + t.prop * 2 + t.slot, MacEvent::CtsTimeout),
                FrameKind::Data => (Phase::AwaitAck, t.sifs + t.ack + t.prop * 2 + t.slot, MacEvent::AckTimeout),
                _ => return,
            };
            st.state.phase = phase;
            let h = self.sched.schedule(SimEvent::new(now + wait, EventKind::TimerExpiry, src, timer));
            st.timer = Some(h);
        } else if let Some(ap) = self.aps[src.0].as_mut() {
            match frame.kind {
                FrameKind::Cts => {
                    ap.phase = ApPhase::AwaitData {
                        winner: frame.destination,
                    };
                    let at = now + t.sifs + t.prop + t.slot;
                    let h = self
                        .sched
                        .schedule(SimEvent::new(at, EventKind::TimerExpiry, src, MacEvent::Watchdog));
                    ap.watchdog = Some(h);
                }
                FrameKind::Ack => ap.phase = ApPhase::Listening,
                _ => {}
            }
        }
    }

    fn on_arrive(&mut self, frame: Frame) {
        let n = self.topology.listeners(frame.source).len();
        for i in 0..n {
            let l = self.topology.listeners(frame.source)[i];
            let was_busy = self.radios[l.0].is_busy();
            self.radios[l.0].begin(frame);
            if self.stations[l.0].is_some() {
                if !was_busy {
                    self.refresh(l);
                }
            } else if self.aps[l.0].is_some() {
                self.ap_arrive(l, frame);
            }
        }
    }

    fn on_depart(&mut self, frame: Frame) {
        let now = self.sched.now();
        let n = self.topology.listeners(frame.source).len();
        let mut cts_hit = false;
        for i in 0..n {
            let l = self.topology.listeners(frame.source)[i];
            let Some(rx) = self.radios[l.0].end(frame.id, now) else {
                continue;
            };
            cts_hit |= frame.kind == FrameKind::Cts && rx.collided;
            if self.stations[l.0].is_some() {
                if rx.intact() {
                    self.station_receive(l, frame);
                }
                if !self.radios[l.0].is_busy() {
                    self.refresh(l);
                }
            } else if self.aps[l.0].is_some() {
                self.ap_depart(l, frame, rx.intact(), rx.collided, rx.missed);
            }
        }
        if cts_hit {
            self.metrics.cts_collisions += 1;
        }
    }
}
