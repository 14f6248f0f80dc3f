//! Batch driver: sweeps over station counts, band counts and seeds.

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::error::{Error, Result};
pub use config::{parse_list, Format, Overrides, Settings, SweepSpec};
pub use sweep::{emit, render, run_sweep, Row, HEADER};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "MBCSMA_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "mbcsma", version, about = "Multiband CSMA/CA RTS/CTS simulator")]
pub struct Args {
    /// saturated, hidden, exposed or pathologic
    #[arg(long)]
    pub scenario: Option<String>,
    /// Station counts, e.g. `10,50,100`
    #[arg(long)]
    pub stations: Option<String>,
    /// RTS band counts, e.g. `1..5`
    #[arg(long)]
    pub bands: Option<String>,
    /// Seeds; `a..b` is inclusive
    #[arg(long)]
    pub seeds: Option<String>,
    /// RTS spans handed to the stations in turn
    #[arg(long)]
    pub spans: Option<String>,
    #[arg(long)]
    pub cw_min: Option<String>,
    #[arg(long)]
    pub cw_max: Option<String>,
    /// Measured exchanges per run
    #[arg(long)]
    pub duration_exchanges: Option<String>,
    /// Exchanges discarded before measuring
    #[arg(long)]
    pub warmup: Option<String>,
    /// Output file; stdout if absent
    #[arg(long)]
    pub output: Option<String>,
    /// csv or json
    #[arg(long)]
    pub format: Option<String>,
    /// Directory for per-run event traces
    #[arg(long)]
    pub trace: Option<String>,
    /// Config file; overrides the one named by MBCSMA_CONFIG
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Args {
    fn flag_settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        let flags = [
            ("scenario", &self.scenario),
            ("stations", &self.stations),
            ("bands", &self.bands),
            ("seeds", &self.seeds),
            ("spans", &self.spans),
            ("cw_min", &self.cw_min),
            ("cw_max", &self.cw_max),
            ("duration_exchanges", &self.duration_exchanges),
            ("warmup", &self.warmup),
            ("output", &self.output),
            ("format", &self.format),
            ("trace", &self.trace),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v)?;
            }
        }
        Ok(s)
    }
}

/// Merges defaults, the config file (`--config`, else `$MBCSMA_CONFIG`) and
/// the flags, in increasing precedence.
pub fn parse_config(args: &Args, env_config: Option<PathBuf>) -> Result<(SweepSpec, Overrides)> {
    let mut settings = match args.config.clone().or(env_config) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            Settings::parse_file(&text)?
        }
        None => Settings::default(),
    };
    settings.merge(args.flag_settings()?);
    settings.resolve()
}

/// Entry point shared by the binary and the tests. Returns the process exit
/// code: 0 when every run completed, 1 when a run failed, 2 for bad input.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let env_config = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let (spec, over) = match parse_config(&args, env_config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run_sweep(&spec, &over) {
        Ok(rows) => match emit(&rows, spec.format, spec.output.as_deref()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Err(partial) => {
            if !partial.rows.is_empty() {
                if let Err(e) = emit(&partial.rows, spec.format, spec.output.as_deref()) {
                    eprintln!("error: {e}");
                }
            }
            eprintln!("error: {}", partial.error);
            match partial.error {
                Error::InvalidConfig(_) | Error::UnknownKey(_) => 2,
                _ => 1,
            }
        }
    }
}
