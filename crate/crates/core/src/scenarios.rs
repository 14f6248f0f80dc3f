//! Experiment topologies and run configurations.

use crate::error::{Error, Result};
use crate::mac::{ContentionWindow, DEFAULT_CW_MAX, DEFAULT_CW_MIN};
use crate::phy::{BandPlan, NodeId, PhyParams, Role, Timing, Topology};

pub const DEFAULT_TARGET_EXCHANGES: u64 = 100_000;
pub const DEFAULT_WARMUP_EXCHANGES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficMode {
    /// Every station always has a packet waiting.
    Saturation,
    /// Every station delivers exactly one packet queued at time zero.
    SinglePacket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationConfig {
    pub node: NodeId,
    /// Receiver named in the RTS destination field.
    pub destination: NodeId,
    pub rts_band_span: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: Topology,
    pub stations: Vec<StationConfig>,
    pub n_bands: usize,
    pub phy: PhyParams,
    pub cw_min: u32,
    pub cw_max: u32,
    pub traffic: TrafficMode,
    pub seed: u64,
    /// Completed exchanges to measure after warm-up.
    pub target_exchanges: u64,
    /// Completed exchanges discarded before measuring.
    pub warmup_exchanges: u64,
    /// Hard stop in simulated seconds.
    pub max_duration: Option<f64>,
    pub nav_enabled: bool,
    pub trace: bool,
}

impl ScenarioConfig {
    fn base(name: &str, topology: Topology, n_bands: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: name.to_string(),
            topology,
            stations: Vec::new(),
            n_bands,
            phy: PhyParams::default(),
            cw_min: DEFAULT_CW_MIN,
            cw_max: DEFAULT_CW_MAX,
            traffic: TrafficMode::Saturation,
            seed: 1,
            target_exchanges: DEFAULT_TARGET_EXCHANGES,
            warmup_exchanges: DEFAULT_WARMUP_EXCHANGES,
            max_duration: None,
            nav_enabled: true,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Timing::new(&self.phy)?;
        BandPlan::new(self.n_bands)?;
        ContentionWindow::new(self.cw_min, self.cw_max)?;
        if self.stations.is_empty() {
            return Err(Error::config("scenario has no stations"));
        }
        let mut seen = vec![false; self.topology.len()];
        for s in &self.stations {
            if !self.topology.contains(s.node) || !self.topology.contains(s.destination) {
                return Err(Error::config(format!("station {} is not in the topology", s.node)));
            }
            if self.topology.role(s.node) != Role::Station {
                return Err(Error::config(format!("node {} is not a station", s.node)));
            }
            if self.topology.role(s.destination) != Role::AccessPoint {
                return Err(Error::config(format!(
                    "destination {} of station {} is not a receiver",
                    s.destination, s.node
                )));
            }
            if std::mem::replace(&mut seen[s.node.0], true) {
                return Err(Error::config(format!("station {} configured twice", s.node)));
            }
            if s.rts_band_span == 0 || s.rts_band_span > self.n_bands {
                return Err(Error::config(format!(
                    "RTS span {} of station {} exceeds {} bands",
                    s.rts_band_span, s.node, self.n_bands
                )));
            }
        }
        if self.traffic == TrafficMode::Saturation && self.target_exchanges == 0 {
            return Err(Error::config("saturation run needs a positive exchange target"));
        }
        if let Some(d) = self.max_duration {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::config("max duration must be positive"));
            }
        }
        Ok(())
    }

    /// Assigns RTS spans to stations in order, cycling through `spans`.
    pub fn with_spans(mut self, spans: &[usize]) -> Self {
        if !spans.is_empty() {
            for (i, s) in self.stations.iter_mut().enumerate() {
                s.rts_band_span = spans[i % spans.len()];
            }
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_exchanges(mut self, target: u64, warmup: u64) -> Self {
        self.target_exchanges = target;
        self.warmup_exchanges = warmup;
        self
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn node(&self, name: &str) -> NodeId {
        self.topology
            .find(name)
            .unwrap_or_else(|| panic!("no node named {name}"))
    }
}

/// `n_stations` stations and one access point, everyone hearing everyone,
/// single-band RTS, saturated traffic.
pub fn build_saturated_cell(n_stations: usize, n_bands: usize) -> Result<ScenarioConfig> {
    if n_stations == 0 {
        return Err(Error::config("a cell needs at least one station"));
    }
    let mut topology = Topology::new();
    let ap = topology.add_node("AP", Role::AccessPoint);
    let nodes: Vec<NodeId> = (0..n_stations)
        .map(|i| topology.add_node(format!("STA{i}"), Role::Station))
        .collect();
    topology.fully_connected();
    let mut cfg = ScenarioConfig::base("saturated", topology, n_bands);
    cfg.stations = nodes
        .into_iter()
        .map(|node| StationConfig {
            node,
            destination: ap,
            rts_band_span: 1,
        })
        .collect();
    cfg.validate()?;
    Ok(cfg)
}

/// X and Y both hear R but not each other.
pub fn build_hidden_node() -> ScenarioConfig {
    let mut topology = Topology::new();
    let x = topology.add_node("X", Role::Station);
    let y = topology.add_node("Y", Role::Station);
    let r = topology.add_node("R", Role::AccessPoint);
    topology.connect(x, r);
    topology.connect(y, r);
    let mut cfg = ScenarioConfig::base("hidden", topology, 1);
    cfg.stations = [x, y]
        .into_iter()
        .map(|node| StationConfig {
            node,
            destination: r,
            rts_band_span: 1,
        })
        .collect();
    cfg
}

/// S sends to D while S_E, which hears S but neither D nor anything D
/// sends, wants to reach D_E.
pub fn build_exposed_node() -> ScenarioConfig {
    let mut topology = Topology::new();
    let s = topology.add_node("S", Role::Station);
    let se = topology.add_node("S_E", Role::Station);
    let d = topology.add_node("D", Role::AccessPoint);
    let de = topology.add_node("D_E", Role::AccessPoint);
    topology.connect(s, d);
    topology.connect(s, se);
    topology.connect(se, de);
    let mut cfg = ScenarioConfig::base("exposed", topology, 1);
    cfg.stations = vec![
        StationConfig {
            node: s,
            destination: d,
            rts_band_span: 1,
        },
        StationConfig {
            node: se,
            destination: de,
            rts_band_span: 1,
        },
    ];
    cfg
}

/// The same S_E to D_E link with nobody else around.
pub fn build_isolated_pair() -> ScenarioConfig {
    let mut topology = Topology::new();
    let se = topology.add_node("S_E", Role::Station);
    let de = topology.add_node("D_E", Role::AccessPoint);
    topology.connect(se, de);
    let mut cfg = ScenarioConfig::base("isolated", topology, 1);
    cfg.stations = vec![StationConfig {
        node: se,
        destination: de,
        rts_band_span: 1,
    }];
    cfg
}

/// Sources A and C address different receivers B and D over a multiband
/// channel. B hears both sources, D hears only C. With `fully_connected`
/// every node hears every other node instead.
pub fn build_pathologic_pairs(fully_connected: bool) -> ScenarioConfig {
    let mut topology = Topology::new();
    let a = topology.add_node("A", Role::Station);
    let b = topology.add_node("B", Role::AccessPoint);
    let c = topology.add_node("C", Role::Station);
    let d = topology.add_node("D", Role::AccessPoint);
    if fully_connected {
        topology.fully_connected();
    } else {
        topology.connect(a, b);
        topology.connect(c, b);
        topology.connect(c, d);
    }
    let name = if fully_connected {
        "pathologic-full"
    } else {
        "pathologic"
    };
    let mut cfg = ScenarioConfig::base(name, topology, 2);
    cfg.stations = vec![
        StationConfig {
            node: a,
            destination: b,
            rts_band_span: 1,
        },
        StationConfig {
            node: c,
            destination: d,
            rts_band_span: 1,
        },
    ];
    cfg
}

/// Looks up a builder by its command-line name.
pub fn build_named(name: &str, n_stations: usize, n_bands: usize) -> Result<ScenarioConfig> {
    let mut cfg = match name {
        "saturated" => return build_saturated_cell(n_stations, n_bands),
        "hidden" => build_hidden_node(),
        "exposed" => build_exposed_node(),
        "pathologic" => build_pathologic_pairs(false),
        other => return Err(Error::config(format!("unknown scenario `{other}`"))),
    };
    cfg.n_bands = n_bands;
    cfg.validate()?;
    Ok(cfg)
}

pub const SCENARIO_NAMES: [&str; 4] = ["saturated", "hidden", "exposed", "pathologic"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_cell_is_complete() {
        let cfg = build_saturated_cell(50, 5).unwrap();
        assert_eq!(cfg.topology.len(), 51);
        assert_eq!(cfg.topology.edge_count(), 51 * 50);
        assert_eq!(cfg.topology.access_points().count(), 1);
        assert!(cfg.stations.iter().all(|s| s.rts_band_span == 1));
        assert_eq!(cfg.traffic, TrafficMode::Saturation);
    }

    #[test]
    fn degenerate_cell() {
        let cfg = build_saturated_cell(1, 1).unwrap();
        assert_eq!(cfg.topology.len(), 2);
        assert!(build_saturated_cell(0, 1).is_err());
        assert!(build_saturated_cell(3, 0).is_err());
    }

    #[test]
    fn hidden_topology_has_four_edges() {
        let cfg = build_hidden_node();
        cfg.validate().unwrap();
        let t = &cfg.topology;
        assert_eq!(t.edge_count(), 4);
        let (x, y, r) = (cfg.node("X"), cfg.node("Y"), cfg.node("R"));
        assert!(t.hears(x, r) && t.hears(r, x) && t.hears(y, r) && t.hears(r, y));
        assert!(!t.hears(x, y) && !t.hears(y, x));
    }

    #[test]
    fn exposed_topology_keeps_s_e_away_from_d() {
        let cfg = build_exposed_node();
        cfg.validate().unwrap();
        let t = &cfg.topology;
        let (s, se, d) = (cfg.node("S"), cfg.node("S_E"), cfg.node("D"));
        assert!(t.hears(se, s));
        assert!(!t.hears(se, d) && !t.hears(d, se));
    }

    #[test]
    fn pathologic_topology() {
        let cfg = build_pathologic_pairs(false);
        cfg.validate().unwrap();
        let t = &cfg.topology;
        let (a, b, c, d) = (cfg.node("A"), cfg.node("B"), cfg.node("C"), cfg.node("D"));
        assert!(t.hears(b, a) && t.hears(b, c));
        assert!(t.hears(d, c) && !t.hears(d, a));
        assert_eq!(cfg.stations[0].destination, b);
        assert_eq!(cfg.stations[1].destination, d);
        let full = build_pathologic_pairs(true);
        assert!(full.topology.hears(full.node("D"), full.node("A")));
    }

    #[test]
    fn spans_cycle_and_are_validated() {
        let cfg = build_saturated_cell(3, 5).unwrap().with_spans(&[1, 2]);
        let spans: Vec<usize> = cfg.stations.iter().map(|s| s.rts_band_span).collect();
        assert_eq!(spans, [1, 2, 1]);
        cfg.validate().unwrap();
        let bad = build_saturated_cell(3, 2).unwrap().with_spans(&[3]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn named_builders() {
        for name in SCENARIO_NAMES {
            let cfg = build_named(name, 4, 2).unwrap();
            cfg.validate().unwrap();
        }
        assert!(build_named("mesh", 4, 2).is_err());
    }
}
