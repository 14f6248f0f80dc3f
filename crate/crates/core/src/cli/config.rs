//! Flat `key = value` configuration, merged from a file and the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::phy::PhyParams;
use crate::scenarios::{DEFAULT_TARGET_EXCHANGES, DEFAULT_WARMUP_EXCHANGES, SCENARIO_NAMES};

/// Every key accepted in a config file. Dashes in keys read as underscores.
pub const KEYS: [&str; 25] = [
    "scenario",
    "stations",
    "bands",
    "seeds",
    "spans",
    "cw_min",
    "cw_max",
    "duration_exchanges",
    "warmup",
    "output",
    "format",
    "trace",
    "max_duration",
    "nav",
    "payload_bits",
    "mac_header_bits",
    "phy_header_bits",
    "ack_bits",
    "rts_bits",
    "cts_bits",
    "channel_bit_rate",
    "propagation_delay",
    "sifs",
    "slot_time",
    "difs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// The run set: every combination of station count, band count and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: String,
    pub stations: Vec<usize>,
    pub bands: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Directory receiving one event trace per run.
    pub trace_dir: Option<PathBuf>,
}

impl SweepSpec {
    pub fn run_count(&self) -> usize {
        self.stations.len() * self.bands.len() * self.seeds.len()
    }
}

/// Per-run settings applied on top of the scenario builder.
#[derive(Debug, Clone, PartialEq)]
pub struct Overrides {
    pub spans: Option<Vec<usize>>,
    pub cw_min: u32,
    pub cw_max: u32,
    pub target_exchanges: u64,
    pub warmup_exchanges: u64,
    pub max_duration: Option<f64>,
    pub nav_enabled: bool,
    pub phy: PhyParams,
}

/// Raw settings in precedence order: later layers win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Reads `key = value` lines. Blank lines and lines starting with `#`
    /// or `;` are skipped.
    pub fn parse_file(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", no + 1)))?;
            s.set(k, v)?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn merge(&mut self, over: Settings) {
        self.values.extend(over.values);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn resolve(&self) -> Result<(SweepSpec, Overrides)> {
        let scenario = self.get("scenario").unwrap_or("saturated").to_string();
        if !SCENARIO_NAMES.contains(&scenario.as_str()) {
            return Err(Error::config(format!(
                "unknown scenario `{scenario}` (expected one of {})",
                SCENARIO_NAMES.join(", ")
            )));
        }
        let stations = self.list("stations", "10,50,100")?;
        let bands = self.list("bands", "1..5")?;
        let seeds = self.list("seeds", "1..5")?;
        if stations.contains(&0) {
            return Err(Error::config("station counts must be positive"));
        }
        if bands.contains(&0) {
            return Err(Error::config("band counts must be positive"));
        }
        let format = match self.get("format").unwrap_or("csv").to_ascii_lowercase().as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(Error::config(format!("unknown format `{other}`"))),
        };
        let spec = SweepSpec {
            scenario,
            stations: stations.into_iter().map(|v| v as usize).collect(),
            bands: bands.into_iter().map(|v| v as usize).collect(),
            seeds,
            output: self.get("output").filter(|s| !s.is_empty()).map(PathBuf::from),
            format,
            trace_dir: self.get("trace").filter(|s| !s.is_empty()).map(PathBuf::from),
        };

        let spans = match self.get("spans") {
            Some(v) => {
                let spans: Vec<usize> = parse_list(v, "spans")?.into_iter().map(|s| s as usize).collect();
                if spans.contains(&0) {
                    return Err(Error::config("RTS spans must be positive"));
                }
                Some(spans)
            }
            None => None,
        };
        let d = PhyParams::default();
        let phy = PhyParams {
            payload_bits: self.num("payload_bits", d.payload_bits)?,
            mac_header_bits: self.num("mac_header_bits", d.mac_header_bits)?,
            phy_header_bits: self.num("phy_header_bits", d.phy_header_bits)?,
            ack_bits: self.num("ack_bits", d.ack_bits)?,
            rts_bits: self.num("rts_bits", d.rts_bits)?,
            cts_bits: self.num("cts_bits", d.cts_bits)?,
            channel_bit_rate: self.num("channel_bit_rate", d.channel_bit_rate)?,
            propagation_delay: self.num("propagation_delay", d.propagation_delay)?,
            sifs: self.num("sifs", d.sifs)?,
            slot_time: self.num("slot_time", d.slot_time)?,
            difs: self.num("difs", d.difs)?,
        };
        phy.validate()?;
        let nav_enabled = match self.get("nav").unwrap_or("true") {
            "true" | "on" | "1" | "yes" => true,
            "false" | "off" | "0" | "no" => false,
            other => return Err(Error::config(format!("nav: expected true or false, got `{other}`"))),
        };
        let max_duration = match self.get("max_duration") {
            Some(v) => Some(parse_num::<f64>(v, "max_duration")?),
            None => None,
        };
        let over = Overrides {
            spans,
            cw_min: self.num("cw_min", crate::mac::DEFAULT_CW_MIN)?,
            cw_max: self.num("cw_max", crate::mac::DEFAULT_CW_MAX)?,
            target_exchanges: self.num("duration_exchanges", DEFAULT_TARGET_EXCHANGES)?,
            warmup_exchanges: self.num("warmup", DEFAULT_WARMUP_EXCHANGES)?,
            max_duration,
            nav_enabled,
            phy,
        };
        crate::mac::ContentionWindow::new(over.cw_min, over.cw_max)?;
        Ok((spec, over))
    }

    fn list(&self, key: &str, default: &str) -> Result<Vec<u64>> {
        parse_list(self.get(key).unwrap_or(default), key)
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(v) => parse_num(v, key),
            None => Ok(default),
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{v}`")))
}

/// Comma-separated values, each a number or an inclusive range `a..b`.
pub fn parse_list(text: &str, key: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(Error::config(format!("{key}: empty list item in `{text}`")));
        }
        match item.split_once("..") {
            Some((a, b)) => {
                let a: u64 = parse_num(a, key)?;
                let b: u64 = parse_num(b.trim_start_matches('='), key)?;
                if a > b {
                    return Err(Error::config(format!("{key}: empty range `{item}`")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(item, key)?),
        }
    }
    Ok(out)
}
