//! Sweep execution and result tables.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Format, Overrides, SweepSpec};
use crate::error::{Error, Result};
use crate::mac::Network;
use crate::metrics::{collision_probability, delay_cdf, saturation_throughput, RunMetrics};
use crate::scenarios::{build_named, ScenarioConfig};

pub const HEADER: &str = "n_stations,n_bands,seed,collision_prob,throughput_bps,delay_p50,p90,p95,p98,p99";

/// Delay quantiles reported per row.
pub const QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.98, 0.99];
const DELAY_KEYS: [&str; 5] = ["delay_p50", "p90", "p95", "p98", "p99"];

/// One output record. `seed == None` marks the mean over a cell's seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub n_stations: usize,
    pub n_bands: usize,
    pub seed: Option<u64>,
    pub collision_prob: Option<f64>,
    pub throughput_bps: Option<f64>,
    /// Seconds, in the order of [`QUANTILES`].
    pub delays: [Option<f64>; 5],
}

impl Row {
    pub fn from_metrics(n_stations: usize, n_bands: usize, seed: u64, m: &RunMetrics) -> Row {
        let cdf = delay_cdf(m).ok();
        Row {
            n_stations,
            n_bands,
            seed: Some(seed),
            collision_prob: collision_probability(m),
            throughput_bps: saturation_throughput(m),
            delays: QUANTILES.map(|q| cdf.as_ref().map(|c| c.quantile(q))),
        }
    }

    /// The row as it reads back from rendered output.
    pub fn rounded(&self) -> Row {
        let r = |v: Option<f64>| v.map(round6);
        Row {
            collision_prob: r(self.collision_prob),
            throughput_bps: r(self.throughput_bps),
            delays: self.delays.map(r),
            ..self.clone()
        }
    }

    fn key(&self) -> (usize, usize, u64) {
        (self.n_stations, self.n_bands, self.seed.unwrap_or(u64::MAX))
    }
}

/// Rows sorted by (stations, bands, seed) followed by one mean row per
/// (stations, bands) cell.
pub fn with_aggregates(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort_by_key(Row::key);
    let mut means = Vec::new();
    for cell in rows.chunk_by(|a, b| (a.n_stations, a.n_bands) == (b.n_stations, b.n_bands)) {
        let mean = |f: &dyn Fn(&Row) -> Option<f64>| {
            let vals: Vec<f64> = cell.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        means.push(Row {
            n_stations: cell[0].n_stations,
            n_bands: cell[0].n_bands,
            seed: None,
            collision_prob: mean(&|r| r.collision_prob),
            throughput_bps: mean(&|r| r.throughput_bps),
            delays: [0, 1, 2, 3, 4].map(|i| mean(&|r| r.delays[i])),
        });
    }
    rows.extend(means);
    rows
}

/// A sweep stopped by a failing run; `rows` holds every run that finished.
#[derive(Debug)]
pub struct PartialSweep {
    pub rows: Vec<Row>,
    pub error: Error,
}

/// Builds and validates the configuration of every run in the sweep.
pub fn plan_runs(spec: &SweepSpec, over: &Overrides) -> Result<Vec<ScenarioConfig>> {
    let mut runs = Vec::with_capacity(spec.run_count());
    let mut seen = std::collections::BTreeSet::new();
    for &n in &spec.stations {
        for &b in &spec.bands {
            let mut base = build_named(&spec.scenario, n, b)?;
            // fixed topologies ignore the station count
            if !seen.insert((base.station_count(), b)) {
                continue;
            }
            if let Some(spans) = &over.spans {
                base = base.with_spans(spans);
            }
            base.phy = over.phy.clone();
            base.cw_min = over.cw_min;
            base.cw_max = over.cw_max;
            base.target_exchanges = over.target_exchanges;
            base.warmup_exchanges = over.warmup_exchanges;
            base.max_duration = over.max_duration;
            base.nav_enabled = over.nav_enabled;
            base.trace = spec.trace_dir.is_some();
            base.validate()?;
            for &seed in &spec.seeds {
                runs.push(base.clone().with_seed(seed));
            }
        }
    }
    Ok(runs)
}

fn run_one(cfg: &ScenarioConfig, trace_dir: Option<&Path>) -> Result<Row> {
    let mut net = Network::new(cfg)?;
    let m = net.run()?;
    if let (Some(dir), Some(trace)) = (trace_dir, net.take_trace()) {
        let name = format!(
            "{}_n{}_b{}_s{}.trace",
            cfg.name,
            cfg.station_count(),
            cfg.n_bands,
            cfg.seed
        );
        let file = fs::File::create(dir.join(name))?;
        trace.write_to(std::io::BufWriter::new(file))?;
    }
    Ok(Row::from_metrics(cfg.station_count(), cfg.n_bands, cfg.seed, &m))
}

/// Executes every run, in parallel, and returns the sorted table with
/// aggregates.
pub fn run_sweep(spec: &SweepSpec, over: &Overrides) -> std::result::Result<Vec<Row>, PartialSweep> {
    let fail = |error| PartialSweep { rows: Vec::new(), error };
    let runs = plan_runs(spec, over).map_err(fail)?;
    if let Some(dir) = &spec.trace_dir {
        fs::create_dir_all(dir).map_err(|e| fail(e.into()))?;
    }
    let results: Vec<Result<Row>> = runs
        .par_iter()
        .map(|cfg| run_one(cfg, spec.trace_dir.as_deref()))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        None => Ok(with_aggregates(rows)),
        Some(error) => {
            rows.sort_by_key(Row::key);
            Err(PartialSweep { rows, error })
        }
    }
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn round6(x: f64) -> f64 {
    fmt_sig6(x).parse().unwrap_or(x)
}

pub fn render(rows: &[Row], format: Format) -> String {
    match format {
        Format::Csv => render_csv(rows),
        Format::Json => render_json(rows),
    }
}

pub fn render_csv(rows: &[Row]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_sig6).unwrap_or_default();
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        let mut fields = vec![
            r.n_stations.to_string(),
            r.n_bands.to_string(),
            seed,
            opt(r.collision_prob),
            opt(r.throughput_bps),
        ];
        fields.extend(r.delays.iter().map(|d| opt(*d)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(rows: &[Row]) -> String {
    let num = |v: Option<f64>| v.map_or(Value::Null, |x| json!(round6(x)));
    let records: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut obj = serde_json::Map::new();
            obj.insert("n_stations".into(), json!(r.n_stations));
            obj.insert("n_bands".into(), json!(r.n_bands));
            obj.insert("seed".into(), r.seed.map_or(json!("mean"), |s| json!(s)));
            obj.insert("collision_prob".into(), num(r.collision_prob));
            obj.insert("throughput_bps".into(), num(r.throughput_bps));
            for (k, d) in DELAY_KEYS.iter().zip(r.delays) {
                obj.insert((*k).into(), num(d));
            }
            Value::Object(obj)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&Value::Array(records)).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::config("missing or unexpected CSV header"));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::config(format!("bad number `{s}`")))
        }
    };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::config(format!("bad integer `{s}`"))) };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::config(format!("expected 10 fields in `{line}`")));
            }
            Ok(Row {
                n_stations: int(f[0])?,
                n_bands: int(f[1])?,
                seed: if f[2] == "mean" { None } else { Some(int(f[2])? as u64) },
                collision_prob: opt(f[3])?,
                throughput_bps: opt(f[4])?,
                delays: [opt(f[5])?, opt(f[6])?, opt(f[7])?, opt(f[8])?, opt(f[9])?],
            })
        })
        .collect()
}

pub fn parse_json(text: &str) -> Result<Vec<Row>> {
    let value: Value = serde_json::from_str(text)?;
    let records = value.as_array().ok_or_else(|| Error::config("expected a JSON array"))?;
    let bad = |what: &str| Error::config(format!("bad or missing `{what}`"));
    records
        .iter()
        .map(|rec| {
            let int = |k: &str| rec.get(k).and_then(Value::as_u64).ok_or_else(|| bad(k));
            let num = |k: &str| match rec.get(k) {
                Some(Value::Null) => Ok(None),
                Some(v) => v.as_f64().map(Some).ok_or_else(|| bad(k)),
                None => Err(bad(k)),
            };
            let seed = match rec.get("seed") {
                Some(Value::String(s)) if s == "mean" => None,
                Some(v) => Some(v.as_u64().ok_or_else(|| bad("seed"))?),
                None => return Err(bad("seed")),
            };
            Ok(Row {
                n_stations: int("n_stations")? as usize,
                n_bands: int("n_bands")? as usize,
                seed,
                collision_prob: num("collision_prob")?,
                throughput_bps: num("throughput_bps")?,
                delays: [
                    num(DELAY_KEYS[0])?,
                    num(DELAY_KEYS[1])?,
                    num(DELAY_KEYS[2])?,
                    num(DELAY_KEYS[3])?,
                    num(DELAY_KEYS[4])?,
                ],
            })
        })
        .collect()
}

/// Writes the table to `path`, or to stdout without one.
pub fn emit(rows: &[Row], format: Format, path: Option<&Path>) -> Result<()> {
    let text = render(rows, format);
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, b: usize, seed: Option<u64>, pc: Option<f64>) -> Row {
        Row {
            n_stations: n,
            n_bands: b,
            seed,
            collision_prob: pc,
            throughput_bps: Some(2.5e7),
            delays: [Some(1.53e-3), None, Some(0.1), Some(1.0), Some(123456.7)],
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(1.53e-3), "0.00153");
        assert_eq!(fmt_sig6(25_110_000.0), "2.511e7");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(0.123456789), "0.123457");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(9.999996), "10");
        assert_eq!(fmt_sig6(1.234e-7), "1.234e-7");
        assert_eq!(fmt_sig6(-0.5), "-0.5");
    }

    #[test]
    fn csv_layout() {
        let text = render_csv(&[row(10, 2, Some(3), None)]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(HEADER));
        assert_eq!(lines.next(), Some("10,2,3,,2.5e7,0.00153,,0.1,1,123457"));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rows = with_aggregates(vec![
            row(10, 2, Some(2), Some(0.25)),
            row(10, 2, Some(1), Some(0.5)),
            row(5, 1, Some(1), None),
        ]);
        let rounded: Vec<Row> = rows.iter().map(Row::rounded).collect();
        assert_eq!(parse_csv(&render_csv(&rows)).unwrap(), rounded);
        assert_eq!(parse_json(&render_json(&rows)).unwrap(), rounded);
        let json = render_json(&rows);
        assert_eq!(render_json(&parse_json(&json).unwrap()), json);
    }

    #[test]
    fn aggregates_follow_sorted_rows() {
        let rows = with_aggregates(vec![
            row(10, 2, Some(2), Some(0.25)),
            row(10, 2, Some(1), Some(0.5)),
            row(5, 1, Some(1), None),
        ]);
        let keys: Vec<(usize, usize, Option<u64>)> =
            rows.iter().map(|r| (r.n_stations, r.n_bands, r.seed)).collect();
        assert_eq!(
            keys,
            [(5, 1, Some(1)), (10, 2, Some(1)), (10, 2, Some(2)), (5, 1, None), (10, 2, None)]
        );
        assert_eq!(rows[4].collision_prob, Some(0.375));
        // nothing to average stays absent
        assert_eq!(rows[3].collision_prob, None);
        assert_eq!(rows[3].delays[1], None);
    }
}
