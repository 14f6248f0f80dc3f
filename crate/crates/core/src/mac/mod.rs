//! Multiband CSMA/CA with RTS/CTS.
//!
//! Stations sense the medium, count down a random backoff while it stays
//! idle, then send an RTS on a randomly placed block of bands. The access
//! point listens to all bands at once; every RTS it can decode is a
//! candidate, and it grants the medium to one of them, chosen uniformly,
//! with a CTS spanning every band. If decoded RTS frames name different
//! destinations the round is a virtual collision and no CTS is sent.
//!
//! This module holds the per-node protocol rules as plain functions and
//! state types; [`network`] drives them from the event engine.

pub mod network;

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::phy::{BandOccupancy, BandPlan, BandSet, ChannelState, Frame, NodeId, Timing};
use crate::sim::{Nanos, SimRng};

pub use network::{Network, RoundRecord};

pub const DEFAULT_CW_MIN: u32 = 16;
pub const DEFAULT_CW_MAX: u32 = 1024;

/// Contention window, always `cw_min * 2^k` and clamped to `cw_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentionWindow {
    cw: u32,
    cw_min: u32,
    cw_max: u32,
}

impl ContentionWindow {
    pub fn new(cw_min: u32, cw_max: u32) -> Result<Self> {
        if cw_min == 0 {
            return Err(Error::config("cw_min must be at least 1"));
        }
        if cw_max < cw_min || cw_max % cw_min != 0 || !(cw_max / cw_min).is_power_of_two() {
            return Err(Error::config(format!(
                "cw_max ({cw_max}) must be cw_min ({cw_min}) times a power of two"
            )));
        }
        Ok(ContentionWindow {
            cw: cw_min,
            cw_min,
            cw_max,
        })
    }

    pub fn value(&self) -> u32 {
        self.cw
    }

    pub fn min(&self) -> u32 {
        self.cw_min
    }

    pub fn max(&self) -> u32 {
        self.cw_max
    }

    pub fn double(&mut self) {
        self.cw = (self.cw * 2).min(self.cw_max);
    }

    pub fn reset(&mut self) {
        self.cw = self.cw_min;
    }
}

impl Default for ContentionWindow {
    fn default() -> Self {
        ContentionWindow::new(DEFAULT_CW_MIN, DEFAULT_CW_MAX).expect("valid defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Nothing queued.
    IdleWait,
    /// Packet queued, waiting for DIFS of idle medium before a direct
    /// attempt (no backoff drawn).
    Sensing,
    Backoff,
    RtsSent,
    AwaitCts,
    /// Named in the CTS; sending DATA.
    Transmitting,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentionOutcome {
    /// The RTS could not be decoded at its destination.
    RtsCollided,
    GrantedAndAcked,
    /// The RTS was decoded but another station was named in the CTS.
    DecodedNotChosen,
    /// The RTS was decoded but no CTS came back (virtual collision).
    CtsTimeout,
    /// DATA went out but no ACK came back.
    AckTimeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationState {
    pub id: NodeId,
    pub destination: NodeId,
    pub phase: Phase,
    pub backoff_counter: u32,
    pub cw: ContentionWindow,
    pub nav_until: Nanos,
    pub rts_band_span: usize,
    /// Enqueue time of every packet waiting, head first.
    pub queue: VecDeque<Nanos>,
    /// Refill the queue after each delivery.
    pub saturated: bool,
}

impl StationState {
    pub fn new(
        id: NodeId,
        destination: NodeId,
        cw: ContentionWindow,
        rts_band_span: usize,
        saturated: bool,
    ) -> Self {
        StationState {
            id,
            destination,
            phase: Phase::IdleWait,
            backoff_counter: 0,
            cw,
            nav_until: Nanos::ZERO,
            rts_band_span,
            queue: VecDeque::new(),
            saturated,
        }
    }

    pub fn enqueue(&mut self, t: Nanos) {
        self.queue.push_back(t);
    }

    pub fn head_of_line(&self) -> Option<Nanos> {
        self.queue.front().copied()
    }

    /// The station has a packet and senses the medium: idle leads to a
    /// direct attempt once DIFS has passed, busy to a fresh backoff.
    pub fn start_contention(&mut self, channel: ChannelState, rng: &mut SimRng) {
        if self.queue.is_empty() {
            self.phase = Phase::IdleWait;
            return;
        }
        match channel {
            ChannelState::Idle => {
                self.phase = Phase::Sensing;
                self.backoff_counter = 0;
            }
            ChannelState::Busy => self.draw_backoff(rng),
        }
    }

    pub fn draw_backoff(&mut self, rng: &mut SimRng) {
        self.backoff_counter = rng.draw_uniform_int(0, self.cw.value() as u64 - 1) as u32;
        self.phase = Phase::Backoff;
    }

    /// Whether the station is waiting on the medium (counting or frozen).
    pub fn is_contending(&self) -> bool {
        matches!(self.phase, Phase::Sensing | Phase::Backoff)
    }

    /// One slot boundary of the backoff procedure. `idle_for` is how long
    /// the medium has been idle (physically and by NAV) at the boundary; the
    /// counter moves only after a full slot beyond DIFS.
    pub fn backoff_tick(&mut self, channel: ChannelState, idle_for: Nanos, timing: &Timing) {
        if self.phase != Phase::Backoff {
            return;
        }
        if channel == ChannelState::Idle && idle_for >= timing.difs + timing.slot {
            self.backoff_counter = self.backoff_counter.saturating_sub(1);
        }
    }

    /// Virtual carrier sense: the later expiry wins.
    pub fn apply_nav(&mut self, nav_duration: Nanos, t: Nanos) {
        self.nav_until = self.nav_until.max(t + nav_duration);
    }

    pub fn nav_active(&self, t: Nanos) -> bool {
        t < self.nav_until
    }

    /// Updates the contention window and queue after a round. Returns the
    /// access delay of the packet when it was delivered.
    pub fn on_contention_outcome(
        &mut self,
        outcome: ContentionOutcome,
        now: Nanos,
        rng: &mut SimRng,
    ) -> Option<Nanos> {
        match outcome {
            ContentionOutcome::RtsCollided
            | ContentionOutcome::CtsTimeout
            | ContentionOutcome::AckTimeout => {
                self.cw.double();
                self.draw_backoff(rng);
                None
            }
            ContentionOutcome::DecodedNotChosen => {
                self.cw.reset();
                self.draw_backoff(rng);
                None
            }
            ContentionOutcome::GrantedAndAcked => {
                self.cw.reset();
                let started = self.queue.pop_front().expect("acked packet was queued");
                if self.saturated {
                    self.queue.push_back(now);
                }
                if self.queue.is_empty() {
                    self.phase = Phase::IdleWait;
                } else {
                    // the medium was busy with our own exchange
                    self.draw_backoff(rng);
                }
                Some(now - started)
            }
        }
    }
}

/// Lazily evaluated backoff countdown.
///
/// Decrements happen on the slot grid `origin + k * slot`; the counter hits
/// zero at `origin + counter * slot` unless the medium turns busy first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Countdown {
    pub origin: Nanos,
    pub counter: u32,
}

impl Countdown {
    /// Anchors the grid DIFS after the medium went quiet and starts at the
    /// first boundary not earlier than `now`.
    pub fn resume(counter: u32, quiet_since: Nanos, now: Nanos, timing: &Timing) -> Countdown {
        let mut origin = quiet_since + timing.difs;
        if now > origin {
            let slot = timing.slot.0;
            let behind = now.0 - origin.0;
            origin = Nanos(origin.0 + behind.div_ceil(slot) * slot);
        }
        Countdown { origin, counter }
    }

    pub fn expiry(&self, timing: &Timing) -> Nanos {
        self.origin + timing.slot * self.counter as u64
    }

    /// Counter value once the medium turns busy at `t`: every boundary at or
    /// before `t` was preceded by a full idle slot.
    pub fn remaining_at(&self, t: Nanos, timing: &Timing) -> u32 {
        if t <= self.origin {
            return self.counter;
        }
        let done = (t.0 - self.origin.0) / timing.slot.0;
        self.counter - done.min(self.counter as u64) as u32
    }
}

/// Bands for the next RTS: one contiguous block of `span` bands, its
/// position uniform over the `N - span + 1` possibilities.
pub fn select_rts_bands(span: usize, plan: &BandPlan, rng: &mut SimRng) -> Result<BandSet> {
    let n = plan.n_bands();
    if span == 0 || span > n {
        return Err(Error::config(format!(
            "RTS span {span} does not fit in {n} bands"
        )));
    }
    let start = rng.draw_uniform_int(0, (n - span) as u64) as usize;
    Ok(BandSet::contiguous(start, span))
}

/// One RTS as seen by a receiver at the end of a reception window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceivedRts {
    pub frame: Frame,
    /// False if the frame was hit by something other than another RTS of
    /// the window (a CTS or DATA, or the receiver's own transmission).
    pub intact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApOutcome {
    NoRts,
    AllCollided,
    Grant,
    VirtualCollision,
    /// RTS frames were decoded but all of them address another receiver.
    NotAddressed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApDecision {
    pub outcome: ApOutcome,
    pub winner: Option<NodeId>,
    pub decoded: Vec<Frame>,
}

/// True iff the decoded RTS frames carry at least two different
/// destination identities.
pub fn virtual_collision_check(decoded: &[Frame]) -> bool {
    match decoded.split_first() {
        Some((first, rest)) => rest.iter().any(|f| f.destination != first.destination),
        None => false,
    }
}

/// Receiver-side resolution of one RTS window.
///
/// An RTS is decoded when every band it occupies carries it alone. A winner
/// is drawn uniformly among the decoded senders; no random draw is made for
/// rounds that end without a grant.
pub fn ap_resolve_rts(
    me: NodeId,
    occ: &BandOccupancy,
    window: &[ReceivedRts],
    rng: &mut SimRng,
) -> ApDecision {
    let decoded: Vec<Frame> = window
        .iter()
        .filter(|r| r.intact && occ.decodable(&r.frame))
        .map(|r| r.frame)
        .collect();
    let outcome = if window.is_empty() {
        ApOutcome::NoRts
    } else if decoded.is_empty() {
        ApOutcome::AllCollided
    } else if virtual_collision_check(&decoded) {
        ApOutcome::VirtualCollision
    } else if decoded[0].destination != me {
        ApOutcome::NotAddressed
    } else {
        ApOutcome::Grant
    };
    let winner = (outcome == ApOutcome::Grant).then(|| decoded[rng.draw_index(decoded.len())].source);
    ApDecision {
        outcome,
        winner,
        decoded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{FrameKind, PhyParams};

    const AP: NodeId = NodeId(100);

    fn timing() -> Timing {
        Timing::new(&PhyParams::default()).unwrap()
    }

    fn rts(id: u64, src: usize, dst: NodeId, bands: BandSet) -> ReceivedRts {
        ReceivedRts {
            frame: Frame {
                id,
                kind: FrameKind::Rts,
                source: NodeId(src),
                destination: dst,
                bands,
                duration: timing().rts,
                nav: timing().rts_nav(),
            },
            intact: true,
        }
    }

    fn occ(window: &[ReceivedRts], n: usize) -> BandOccupancy {
        BandOccupancy::from_frames(n, window.iter().map(|r| &r.frame))
    }

    fn station() -> StationState {
        let mut s = StationState::new(NodeId(0), AP, ContentionWindow::default(), 1, true);
        s.enqueue(Nanos::ZERO);
        s
    }

    #[test]
    fn contention_window_ladder() {
        let mut cw = ContentionWindow::default();
        let mut seen = vec![cw.value()];
        for _ in 0..8 {
            cw.double();
            seen.push(cw.value());
        }
        assert_eq!(seen, [16, 32, 64, 128, 256, 512, 1024, 1024, 1024]);
        cw.reset();
        assert_eq!(cw.value(), 16);
        assert!(ContentionWindow::new(16, 1000).is_err());
        assert!(ContentionWindow::new(0, 16).is_err());
        assert!(ContentionWindow::new(16, 8).is_err());
    }

    #[test]
    fn idle_medium_means_direct_attempt() {
        let mut s = station();
        let mut rng = SimRng::new(1);
        s.start_contention(ChannelState::Idle, &mut rng);
        assert_eq!(s.phase, Phase::Sensing);
        assert_eq!(s.backoff_counter, 0);
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn busy_medium_draws_from_initial_window() {
        let mut rng = SimRng::new(7);
        for _ in 0..500 {
            let mut s = station();
            s.start_contention(ChannelState::Busy, &mut rng);
            assert_eq!(s.phase, Phase::Backoff);
            assert!(s.backoff_counter <= 15);
        }
    }

    #[test]
    fn empty_queue_stays_idle() {
        let mut s = StationState::new(NodeId(0), AP, ContentionWindow::default(), 1, false);
        s.start_contention(ChannelState::Idle, &mut SimRng::new(0));
        assert_eq!(s.phase, Phase::IdleWait);
    }

    #[test]
    fn backoff_tick_counts_idle_slots_and_freezes() {
        let t = timing();
        let mut s = station();
        s.phase = Phase::Backoff;
        s.backoff_counter = 3;
        let after_difs = |k: u64| t.difs + t.slot * k;
        for k in 1..=3 {
            s.backoff_tick(ChannelState::Idle, after_difs(k), &t);
        }
        assert_eq!(s.backoff_counter, 0);

        s.backoff_counter = 3;
        s.backoff_tick(ChannelState::Idle, after_difs(1), &t);
        assert_eq!(s.backoff_counter, 2);
        for _ in 0..5 {
            s.backoff_tick(ChannelState::Busy, Nanos::ZERO, &t);
        }
        assert_eq!(s.backoff_counter, 2);
        // idle again, but not yet for DIFS plus a slot
        s.backoff_tick(ChannelState::Idle, t.difs, &t);
        assert_eq!(s.backoff_counter, 2);
        s.backoff_tick(ChannelState::Idle, after_difs(1), &t);
        assert_eq!(s.backoff_counter, 1);
    }

    #[test]
    fn countdown_matches_tick_rule() {
        let t = timing();
        let c = Countdown::resume(3, Nanos(1_000), Nanos(1_000), &t);
        assert_eq!(c.origin, Nanos(29_000));
        assert_eq!(c.expiry(&t), Nanos(29_000 + 27_000));
        // busy after one slot
        assert_eq!(c.remaining_at(Nanos(29_000 + 9_500), &t), 2);
        assert_eq!(c.remaining_at(Nanos(29_000 + 9_000), &t), 2);
        assert_eq!(c.remaining_at(Nanos(20_000), &t), 3);
        // late start joins the grid at the next boundary
        let late = Countdown::resume(2, Nanos(1_000), Nanos(40_000), &t);
        assert_eq!(late.origin, Nanos(47_000));
    }

    #[test]
    fn nav_keeps_latest_expiry() {
        let mut s = station();
        s.apply_nav(Nanos(500), Nanos(1_000));
        s.apply_nav(Nanos(100), Nanos(1_000));
        assert_eq!(s.nav_until, Nanos(1_500));
        assert!(s.nav_active(Nanos(1_499)));
        assert!(!s.nav_active(Nanos(1_500)));
        s.apply_nav(Nanos(900), Nanos(1_000));
        assert_eq!(s.nav_until, Nanos(1_900));
    }

    #[test]
    fn outcomes_drive_the_window() {
        let mut rng = SimRng::new(3);
        let mut s = station();
        s.on_contention_outcome(ContentionOutcome::RtsCollided, Nanos(10), &mut rng);
        assert_eq!(s.cw.value(), 32);
        assert!(s.backoff_counter < 32);

        let mut s = station();
        s.cw = ContentionWindow::new(16, 64).unwrap();
        for _ in 0..4 {
            s.on_contention_outcome(ContentionOutcome::CtsTimeout, Nanos(10), &mut rng);
        }
        assert_eq!(s.cw.value(), 64);

        let mut s = station();
        s.cw.double();
        s.cw.double();
        assert_eq!(s.cw.value(), 64);
        let delay = s.on_contention_outcome(ContentionOutcome::GrantedAndAcked, Nanos(900), &mut rng);
        assert_eq!(delay, Some(Nanos(900)));
        assert_eq!(s.cw.value(), 16);
        assert_eq!(s.queue.len(), 1);
        assert_eq!(s.head_of_line(), Some(Nanos(900)));
        assert_eq!(s.phase, Phase::Backoff);

        let mut s = station();
        s.cw.double();
        s.on_contention_outcome(ContentionOutcome::DecodedNotChosen, Nanos(5), &mut rng);
        assert_eq!(s.cw.value(), 16);
        assert!(s.backoff_counter < 16);
        assert_eq!(s.queue.len(), 1);
    }

    #[test]
    fn single_packet_station_goes_idle_after_delivery() {
        let mut rng = SimRng::new(3);
        let mut s = StationState::new(NodeId(0), AP, ContentionWindow::default(), 1, false);
        s.enqueue(Nanos(0));
        s.on_contention_outcome(ContentionOutcome::GrantedAndAcked, Nanos(50), &mut rng);
        assert_eq!(s.phase, Phase::IdleWait);
        assert!(s.queue.is_empty());
    }

    #[test]
    fn one_band_plan_always_uses_band_zero() {
        let plan = BandPlan::new(1).unwrap();
        let mut rng = SimRng::new(5);
        for _ in 0..100 {
            assert_eq!(select_rts_bands(1, &plan, &mut rng).unwrap(), BandSet::single(0));
        }
    }

    #[test]
    fn single_band_choice_is_uniform() {
        let plan = BandPlan::new(5).unwrap();
        let mut rng = SimRng::new(11);
        let mut counts = [0u32; 5];
        let n = 100_000;
        for _ in 0..n {
            let b = select_rts_bands(1, &plan, &mut rng).unwrap();
            assert_eq!(b.len(), 1);
            counts[b.iter().next().unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.2).abs() < 0.2 * 0.02, "frequency {f}");
        }
    }

    #[test]
    fn two_band_span_uses_the_four_contiguous_blocks() {
        let plan = BandPlan::new(5).unwrap();
        let mut rng = SimRng::new(12);
        let blocks: Vec<BandSet> = (0..4).map(|s| BandSet::contiguous(s, 2)).collect();
        let mut counts = [0u32; 4];
        let n = 40_000;
        for _ in 0..n {
            let b = select_rts_bands(2, &plan, &mut rng).unwrap();
            let idx = blocks.iter().position(|x| *x == b).expect("contiguous block");
            counts[idx] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn span_wider_than_plan_is_rejected() {
        let plan = BandPlan::new(3).unwrap();
        assert!(select_rts_bands(4, &plan, &mut SimRng::new(0)).is_err());
        assert!(select_rts_bands(0, &plan, &mut SimRng::new(0)).is_err());
    }

    #[test]
    fn four_station_example_grants_one_of_two() {
        let window = [
            rts(0, 0, AP, BandSet::single(2)),
            rts(1, 1, AP, BandSet::single(1)),
            rts(2, 2, AP, BandSet::single(3)),
            rts(3, 3, AP, BandSet::single(3)),
        ];
        let occ = occ(&window, 5);
        let mut rng = SimRng::new(99);
        let mut wins = [0u32; 2];
        for _ in 0..2_000 {
            let d = ap_resolve_rts(AP, &occ, &window, &mut rng);
            assert_eq!(d.outcome, ApOutcome::Grant);
            let senders: Vec<NodeId> = d.decoded.iter().map(|f| f.source).collect();
            assert_eq!(senders, [NodeId(0), NodeId(1)]);
            wins[d.winner.unwrap().0] += 1;
        }
        assert!(wins[0] > 850 && wins[1] > 850, "{wins:?}");
    }

    #[test]
    fn same_band_for_everyone_collides() {
        let window: Vec<ReceivedRts> = (0..4).map(|i| rts(i, i as usize, AP, BandSet::single(0))).collect();
        let d = ap_resolve_rts(AP, &occ(&window, 3), &window, &mut SimRng::new(1));
        assert_eq!(d.outcome, ApOutcome::AllCollided);
        assert_eq!(d.winner, None);
    }

    #[test]
    fn lone_rts_is_granted() {
        let window = [rts(0, 4, AP, BandSet::single(1))];
        let d = ap_resolve_rts(AP, &occ(&window, 2), &window, &mut SimRng::new(1));
        assert_eq!(d.outcome, ApOutcome::Grant);
        assert_eq!(d.winner, Some(NodeId(4)));
    }

    #[test]
    fn damaged_rts_is_not_decoded() {
        let mut window = [rts(0, 4, AP, BandSet::single(1))];
        window[0].intact = false;
        let d = ap_resolve_rts(AP, &occ(&window, 2), &window, &mut SimRng::new(1));
        assert_eq!(d.outcome, ApOutcome::AllCollided);
    }

    #[test]
    fn empty_window_is_no_rts() {
        let d = ap_resolve_rts(AP, &BandOccupancy::new(2), &[], &mut SimRng::new(1));
        assert_eq!(d.outcome, ApOutcome::NoRts);
    }

    #[test]
    fn virtual_collision_rule() {
        let b = NodeId(1);
        let d = NodeId(3);
        let two = [rts(0, 0, b, BandSet::single(0)).frame, rts(1, 2, d, BandSet::single(1)).frame];
        assert!(virtual_collision_check(&two));
        let same = [rts(0, 0, AP, BandSet::single(0)).frame, rts(1, 2, AP, BandSet::single(1)).frame];
        assert!(!virtual_collision_check(&same));
        assert!(!virtual_collision_check(&same[..1]));
        assert!(!virtual_collision_check(&[]));

        let window = [rts(0, 0, b, BandSet::single(0)), rts(1, 2, d, BandSet::single(1))];
        let dec = ap_resolve_rts(b, &occ(&window, 2), &window, &mut SimRng::new(1));
        assert_eq!(dec.outcome, ApOutcome::VirtualCollision);
        assert_eq!(dec.winner, None);
    }

    #[test]
    fn rts_for_someone_else_is_not_answered() {
        let window = [rts(0, 0, NodeId(7), BandSet::single(0))];
        let dec = ap_resolve_rts(AP, &occ(&window, 2), &window, &mut SimRng::new(1));
        assert_eq!(dec.outcome, ApOutcome::NotAddressed);
    }
}
