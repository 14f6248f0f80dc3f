//! Ideal multi-band channel.
//!
//! No path loss, fading or capture: a node receives every frame from every
//! source it hears, and two frames that overlap in time on a common band
//! destroy each other. The spectrum is split into `N` bands; RTS frames
//! occupy a subset, every other frame occupies all of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::sim::NodeId;
use crate::sim::Nanos;

/// PHY and MAC timing parameters. Defaults are the 802.11n values the
/// simulator is calibrated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyParams {
    pub payload_bits: u32,
    pub mac_header_bits: u32,
    pub phy_header_bits: u32,
    /// ACK body; the PHY header is added on top.
    pub ack_bits: u32,
    /// RTS body; the PHY header is added on top.
    pub rts_bits: u32,
    /// CTS body; the PHY header is added on top.
    pub cts_bits: u32,
    /// bits per second
    pub channel_bit_rate: f64,
    /// seconds
    pub propagation_delay: f64,
    pub sifs: f64,
    pub slot_time: f64,
    pub difs: f64,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            payload_bits: 8184,
            mac_header_bits: 272,
            phy_header_bits: 128,
            ack_bits: 112,
            rts_bits: 160,
            cts_bits: 112,
            channel_bit_rate: 72.2e6,
            propagation_delay: 1e-6,
            sifs: 10e-6,
            slot_time: 9e-6,
            difs: 28e-6,
        }
    }
}

impl PhyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.channel_bit_rate.is_finite() && self.channel_bit_rate > 0.0) {
            return Err(Error::config("channel bit rate must be positive"));
        }
        if self.payload_bits == 0 {
            return Err(Error::config("payload must be at least one bit"));
        }
        for (name, v) in [
            ("propagation_delay", self.propagation_delay),
            ("sifs", self.sifs),
            ("slot_time", self.slot_time),
            ("difs", self.difs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.difs <= self.sifs {
            return Err(Error::config("difs must exceed sifs"));
        }
        Ok(())
    }

    /// Total on-air bits of a frame, headers included.
    pub fn frame_bits(&self, kind: FrameKind) -> u32 {
        match kind {
            FrameKind::Rts => self.rts_bits + self.phy_header_bits,
            FrameKind::Cts => self.cts_bits + self.phy_header_bits,
            FrameKind::Ack => self.ack_bits + self.phy_header_bits,
            FrameKind::Data => self.phy_header_bits + self.mac_header_bits + self.payload_bits,
        }
    }
}

/// On-air time of a frame in seconds. RTS time does not depend on how many
/// bands the RTS spans.
pub fn frame_duration(kind: FrameKind, params: &PhyParams) -> f64 {
    params.frame_bits(kind) as f64 / params.channel_bit_rate
}

/// All protocol durations in whole nanoseconds (rounded up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub rts: Nanos,
    pub cts: Nanos,
    pub data: Nanos,
    pub ack: Nanos,
    pub prop: Nanos,
    pub sifs: Nanos,
    pub slot: Nanos,
    pub difs: Nanos,
}

impl Timing {
    pub fn new(params: &PhyParams) -> Result<Timing> {
        params.validate()?;
        let d = |k| Nanos::from_secs_ceil(frame_duration(k, params));
        Ok(Timing {
            rts: d(FrameKind::Rts),
            cts: d(FrameKind::Cts),
            data: d(FrameKind::Data),
            ack: d(FrameKind::Ack),
            prop: Nanos::from_secs_ceil(params.propagation_delay),
            sifs: Nanos::from_secs_ceil(params.sifs),
            slot: Nanos::from_secs_ceil(params.slot_time),
            difs: Nanos::from_secs_ceil(params.difs),
        })
    }

    pub fn duration(&self, kind: FrameKind) -> Nanos {
        match kind {
            FrameKind::Rts => self.rts,
            FrameKind::Cts => self.cts,
            FrameKind::Data => self.data,
            FrameKind::Ack => self.ack,
        }
    }

    /// NAV carried by an RTS: from the end of the RTS through the end of the
    /// ACK, hop delays included.
    pub fn rts_nav(&self) -> Nanos {
        self.sifs * 3 + self.cts + self.data + self.ack + self.prop * 3
    }

    /// NAV carried by a CTS: from the end of the CTS through the end of the
    /// ACK.
    pub fn cts_nav(&self) -> Nanos {
        self.sifs * 2 + self.data + self.ack + self.prop * 2
    }

    /// A complete successful handshake, DIFS included:
    /// DIFS + RTS + CTS + DATA + ACK + 3 SIFS + 4 propagation delays.
    pub fn exchange(&self) -> Nanos {
        self.difs + self.rts + self.cts + self.data + self.ack + self.sifs * 3 + self.prop * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        })
    }
}

/// Set of band indices, `0..64`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BandSet(u64);

impl BandSet {
    pub const MAX_BANDS: usize = 64;

    pub fn empty() -> Self {
        BandSet(0)
    }

    pub fn single(band: usize) -> Self {
        assert!(band < Self::MAX_BANDS);
        BandSet(1 << band)
    }

    /// `len` consecutive bands starting at `start`.
    pub fn contiguous(start: usize, len: usize) -> Self {
        assert!(start + len <= Self::MAX_BANDS);
        if len == Self::MAX_BANDS {
            return BandSet(u64::MAX);
        }
        BandSet(((1u64 << len) - 1) << start)
    }

    pub fn from_bits(bits: u64) -> Self {
        BandSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, band: usize) -> bool {
        band < Self::MAX_BANDS && self.0 & (1 << band) != 0
    }

    pub fn intersects(self, other: BandSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: BandSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..Self::MAX_BANDS).filter(move |b| self.contains(*b))
    }
}

impl fmt::Display for BandSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for b in self.iter() {
            if !first {
                f.write_str("+")?;
            }
            write!(f, "{b}")?;
            first = false;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandPlan {
    n_bands: usize,
}

impl BandPlan {
    pub fn new(n_bands: usize) -> Result<Self> {
        if n_bands == 0 || n_bands > BandSet::MAX_BANDS {
            return Err(Error::config(format!(
                "band count must be in 1..={}, got {n_bands}",
                BandSet::MAX_BANDS
            )));
        }
        Ok(BandPlan { n_bands })
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn all(&self) -> BandSet {
        BandSet::contiguous(0, self.n_bands)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    /// Unique within a run.
    pub id: u64,
    pub kind: FrameKind,
    pub source: NodeId,
    /// RTS: intended receiver. CTS: the station allowed to transmit.
    /// DATA/ACK: the peer of the exchange.
    pub destination: NodeId,
    pub bands: BandSet,
    pub duration: Nanos,
    pub nav: Nanos,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} id={} src={} dst={} bands={} dur={} nav={}",
            self.kind,
            self.id,
            self.source,
            self.destination,
            self.bands,
            self.duration.0,
            self.nav.0
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Station,
    AccessPoint,
}

/// Nodes and the directed "hears" relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    roles: Vec<Role>,
    names: Vec<String>,
    hears: Vec<bool>,
    heard_by: Vec<Vec<NodeId>>,
}

impl Topology {
    pub fn new() -> Self {
        Topology {
            roles: Vec::new(),
            names: Vec::new(),
            hears: Vec::new(),
            heard_by: Vec::new(),
        }
    }

    pub fn add_node(&mut self, name: impl Into<String>, role: Role) -> NodeId {
        let n = self.roles.len();
        let mut hears = vec![false; (n + 1) * (n + 1)];
        for a in 0..n {
            for b in 0..n {
                hears[a * (n + 1) + b] = self.hears[a * n + b];
            }
        }
        self.hears = hears;
        self.roles.push(role);
        self.names.push(name.into());
        self.heard_by.push(Vec::new());
        NodeId(n)
    }

    /// Records that `listener` hears `source`.
    pub fn add_edge(&mut self, listener: NodeId, source: NodeId) {
        assert_ne!(listener, source, "a node does not hear itself");
        let n = self.len();
        let cell = &mut self.hears[listener.0 * n + source.0];
        if !*cell {
            *cell = true;
            self.heard_by[source.0].push(listener);
            self.heard_by[source.0].sort();
        }
    }

    /// Both directions.
    pub fn connect(&mut self, a: NodeId, b: NodeId) {
        self.add_edge(a, b);
        self.add_edge(b, a);
    }

    pub fn fully_connected(&mut self) {
        let n = self.len();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    self.add_edge(NodeId(a), NodeId(b));
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.len()
    }

    pub fn hears(&self, listener: NodeId, source: NodeId) -> bool {
        let n = self.len();
        self.hears[listener.0 * n + source.0]
    }

    /// Nodes that hear `source`, ascending.
    pub fn listeners(&self, source: NodeId) -> &[NodeId] {
        &self.heard_by[source.0]
    }

    pub fn role(&self, node: NodeId) -> Role {
        self.roles[node.0]
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId)
    }

    pub fn stations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|n| self.role(*n) == Role::Station)
    }

    pub fn access_points(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|n| self.role(*n) == Role::AccessPoint)
    }

    pub fn edge_count(&self) -> usize {
        self.hears.iter().filter(|h| **h).count()
    }
}

impl Default for Topology {
    fn default() -> Self {
        Self::new()
    }
}

/// Time interval during which a frame is present at one listener.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub listener: NodeId,
    pub start: Nanos,
    pub end: Nanos,
}

/// Every node that hears the frame's source receives it over
/// `[t_start + prop, t_start + prop + duration]`.
pub fn deliver(frame: &Frame, topology: &Topology, t_start: Nanos, prop: Nanos) -> Vec<Arrival> {
    assert!(topology.contains(frame.source), "unknown source {}", frame.source);
    let start = t_start + prop;
    topology
        .listeners(frame.source)
        .iter()
        .map(|&listener| Arrival {
            listener,
            start,
            end: start + frame.duration,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandState {
    Idle,
    Decodable,
    Collision,
}

/// Per-band list of frames present at one listener during a reception
/// window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandOccupancy {
    per_band: Vec<Vec<(u64, NodeId)>>,
}

impl BandOccupancy {
    pub fn new(n_bands: usize) -> Self {
        BandOccupancy {
            per_band: vec![Vec::new(); n_bands],
        }
    }

    pub fn from_frames<'a>(n_bands: usize, frames: impl IntoIterator<Item = &'a Frame>) -> Self {
        let mut occ = Self::new(n_bands);
        for f in frames {
            occ.add(f);
        }
        occ
    }

    pub fn add(&mut self, frame: &Frame) {
        for b in frame.bands.iter() {
            if let Some(slot) = self.per_band.get_mut(b) {
                if !slot.iter().any(|(id, _)| *id == frame.id) {
                    slot.push((frame.id, frame.source));
                }
            }
        }
    }

    pub fn n_bands(&self) -> usize {
        self.per_band.len()
    }

    pub fn count(&self, band: usize) -> usize {
        self.per_band[band].len()
    }

    pub fn occupants(&self, band: usize) -> &[(u64, NodeId)] {
        &self.per_band[band]
    }

    pub fn state(&self, band: usize) -> BandState {
        match self.count(band) {
            0 => BandState::Idle,
            1 => BandState::Decodable,
            _ => BandState::Collision,
        }
    }

    pub fn has_collision(&self) -> bool {
        self.per_band.iter().any(|b| b.len() >= 2)
    }

    /// A frame is decodable only if every band it occupies carries it alone.
    pub fn decodable(&self, frame: &Frame) -> bool {
        !frame.bands.is_empty()
            && frame
                .bands
                .iter()
                .all(|b| b < self.n_bands() && self.count(b) == 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Idle,
    Busy,
}

/// A frame on the air, with its transmit start time at the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnAir {
    pub frame: Frame,
    pub start: Nanos,
}

/// Physical carrier sense: busy iff some frame from a source the listener
/// hears is present at the listener on at least one band at time `t`.
pub fn carrier_sense(
    topology: &Topology,
    listener: NodeId,
    t: Nanos,
    prop: Nanos,
    on_air: &[OnAir],
) -> ChannelState {
    assert!(topology.contains(listener));
    let busy = on_air.iter().any(|tx| {
        let start = tx.start + prop;
        tx.frame.source != listener
            && topology.hears(listener, tx.frame.source)
            && !tx.frame.bands.is_empty()
            && start <= t
            && t < start + tx.frame.duration
    });
    if busy {
        ChannelState::Busy
    } else {
        ChannelState::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveRx {
    pub frame: Frame,
    /// Overlapped another frame on a shared band.
    pub collided: bool,
    /// The listener transmitted during part of the frame.
    pub missed: bool,
}

impl ActiveRx {
    pub fn intact(&self) -> bool {
        !self.collided && !self.missed
    }
}

/// Incremental per-node radio state used while a run executes: frames
/// currently arriving, whether the node is transmitting, and when the
/// medium last went quiet.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    active: Vec<ActiveRx>,
    transmitting: bool,
    quiet_since: Nanos,
}

impl Receiver {
    pub fn is_busy(&self) -> bool {
        self.transmitting || !self.active.is_empty()
    }

    pub fn is_transmitting(&self) -> bool {
        self.transmitting
    }

    /// Time the node last went from busy to idle.
    pub fn quiet_since(&self) -> Nanos {
        self.quiet_since
    }

    pub fn active(&self) -> &[ActiveRx] {
        &self.active
    }

    /// A frame's leading edge arrives. Frames sharing a band with it are
    /// destroyed, and nothing is decoded while the node transmits.
    pub fn begin(&mut self, frame: Frame) {
        let mut collided = false;
        for rx in &mut self.active {
            if rx.frame.bands.intersects(frame.bands) {
                rx.collided = true;
                collided = true;
            }
        }
        self.active.push(ActiveRx {
            frame,
            collided,
            missed: self.transmitting,
        });
    }

    /// A frame's trailing edge passes. Returns the finished reception.
    pub fn end(&mut self, frame_id: u64, now: Nanos) -> Option<ActiveRx> {
        let idx = self.active.iter().position(|rx| rx.frame.id == frame_id)?;
        let rx = self.active.swap_remove(idx);
        if !self.is_busy() {
            self.quiet_since = now;
        }
        Some(rx)
    }

    pub fn start_tx(&mut self) {
        self.transmitting = true;
        for rx in &mut self.active {
            rx.missed = true;
        }
    }

    pub fn end_tx(&mut self, now: Nanos) {
        self.transmitting = false;
        if !self.is_busy() {
            self.quiet_since = now;
        }
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_frames() -> impl Strategy<Value = Vec<(u64, u64)>> {
        // (start offset in us, band mask)
        prop::collection::vec((0u64..20, 1u64..32), 0..6)
    }

    proptest! {
        #[test]
        fn decodable_iff_every_band_has_one_occupant(frames in arb_frames()) {
            let frames: Vec<Frame> = frames.iter().enumerate().map(|(i, &(_, mask))| Frame {
                id: i as u64,
                kind: FrameKind::Rts,
                source: NodeId(i),
                destination: NodeId(100),
                bands: BandSet::from_bits(mask),
                duration: Nanos(1),
                nav: Nanos::ZERO,
            }).collect();
            let occ = BandOccupancy::from_frames(5, &frames);
            for f in &frames {
                let alone = frames.iter().all(|g| g.id == f.id || !g.bands.intersects(f.bands));
                prop_assert_eq!(occ.decodable(f), alone);
            }
        }

        #[test]
        fn carrier_sense_is_monotone(frames in arb_frames(), extra in (0u64..20, 1u64..32), t in 0u64..30) {
            let mut topo = Topology::new();
            for i in 0..8 {
                topo.add_node(format!("n{i}"), Role::Station);
            }
            topo.fully_connected();
            let mk = |i: usize, start: u64, mask: u64| OnAir {
                frame: Frame {
                    id: i as u64,
                    kind: FrameKind::Rts,
                    source: NodeId(1 + i % 7),
                    destination: NodeId(0),
                    bands: BandSet::from_bits(mask),
                    duration: Nanos::from_micros(4),
                    nav: Nanos::ZERO,
                },
                start: Nanos::from_micros(start),
            };
            let mut on_air: Vec<OnAir> = frames.iter().enumerate().map(|(i, &(s, m))| mk(i, s, m)).collect();
            let prop = Nanos::from_micros(1);
            let at = Nanos::from_micros(t);
            let before = carrier_sense(&topo, NodeId(0), at, prop, &on_air);
            on_air.push(mk(frames.len(), extra.0, extra.1));
            let after = carrier_sense(&topo, NodeId(0), at, prop, &on_air);
            prop_assert!(!(before == ChannelState::Busy && after == ChannelState::Idle));
        }

        #[test]
        fn deliver_respects_hears_relation(edges in prop::collection::vec((0usize..5, 0usize..5), 0..20), src in 0usize..5) {
            let mut topo = Topology::new();
            for i in 0..5 {
                topo.add_node(format!("n{i}"), Role::Station);
            }
            for (a, b) in edges {
                if a != b {
                    topo.add_edge(NodeId(a), NodeId(b));
                }
            }
            let f = Frame {
                id: 0,
                kind: FrameKind::Cts,
                source: NodeId(src),
                destination: NodeId(0),
                bands: BandSet::single(0),
                duration: Nanos(5),
                nav: Nanos::ZERO,
            };
            let got: Vec<NodeId> = deliver(&f, &topo, Nanos::ZERO, Nanos(1)).iter().map(|a| a.listener).collect();
            let want: Vec<NodeId> = topo.nodes().filter(|n| topo.hears(*n, NodeId(src))).collect();
            prop_assert_eq!(got, want);
        }
    }
}
