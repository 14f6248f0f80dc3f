//! Run observables: RTS collision probability, saturation throughput and
//! the access-delay distribution, plus gain comparisons and an exact
//! enumeration oracle for single-round band collisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{BandPlan, Timing};

/// Per-round statistics for rounds with a given number of RTS frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTally {
    pub rounds: u64,
    /// Rounds in which at least one RTS was decoded.
    pub successful: u64,
    pub attempts: u64,
    /// RTS frames that could not be decoded.
    pub collided: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rts_attempts: u64,
    /// Attempts whose RTS could not be decoded at its destination.
    pub rts_collisions: u64,
    pub acked_packets: u64,
    pub acked_payload_bits: u64,
    /// Access delay of every delivered packet, seconds.
    pub per_packet_delays: Vec<f64>,
    /// Measured interval, seconds.
    pub sim_duration: f64,
    pub cts_sent: u64,
    pub data_sent: u64,
    pub acks_sent: u64,
    /// DATA frames destroyed at their receiver.
    pub data_collisions: u64,
    /// CTS frames destroyed by an overlapping frame at some listener.
    pub cts_collisions: u64,
    pub virtual_collisions: u64,
    /// Indexed by the number of RTS frames in the round.
    pub rounds: Vec<RoundTally>,
}

impl RunMetrics {
    pub fn record_delivery(&mut self, payload_bits: u32, delay_secs: f64) {
        self.acked_packets += 1;
        self.acked_payload_bits += payload_bits as u64;
        self.per_packet_delays.push(delay_secs);
    }

    pub fn record_attempt(&mut self, collided: bool) {
        self.rts_attempts += 1;
        if collided {
            self.rts_collisions += 1;
        }
    }

    pub fn record_round(&mut self, n_rts: usize, decoded: usize) {
        if self.rounds.len() <= n_rts {
            self.rounds.resize(n_rts + 1, RoundTally::default());
        }
        let t = &mut self.rounds[n_rts];
        t.rounds += 1;
        t.attempts += n_rts as u64;
        t.collided += (n_rts - decoded) as u64;
        if decoded > 0 {
            t.successful += 1;
        }
    }

    pub fn round_tally(&self, n_rts: usize) -> RoundTally {
        self.rounds.get(n_rts).copied().unwrap_or_default()
    }
}

/// Fraction of RTS attempts that collided; `None` without attempts.
pub fn collision_probability(m: &RunMetrics) -> Option<f64> {
    (m.rts_attempts > 0).then(|| m.rts_collisions as f64 / m.rts_attempts as f64)
}

/// Delivered payload bits per second of measured time.
pub fn saturation_throughput(m: &RunMetrics) -> Option<f64> {
    (m.sim_duration > 0.0).then(|| m.acked_payload_bits as f64 / m.sim_duration)
}

/// Highest throughput any run can reach: one payload per collision-free
/// exchange with no backoff.
pub fn throughput_upper_bound(payload_bits: u32, timing: &Timing) -> f64 {
    payload_bits as f64 / timing.exchange().as_secs()
}

/// Empirical distribution of per-packet delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayCdf {
    sorted: Vec<f64>,
}

impl DelayCdf {
    pub fn new(delays: &[f64]) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::EmptyDelays);
        }
        let mut sorted = delays.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(DelayCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of delays not exceeding `d`.
    pub fn cdf(&self, d: f64) -> f64 {
        let n = self.sorted.partition_point(|x| *x <= d);
        n as f64 / self.sorted.len() as f64
    }

    /// Smallest delay `d` with `cdf(d) >= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let n = self.sorted.len();
        let rank = (q * n as f64).ceil() as usize;
        // guard against q * n landing a hair above an integer
        let rank = if rank > 0 && ((rank - 1) as f64) >= q * n as f64 - 1e-9 {
            rank - 1
        } else {
            rank
        };
        self.sorted[rank.clamp(1, n) - 1]
    }
}

pub fn delay_cdf(m: &RunMetrics) -> Result<DelayCdf> {
    DelayCdf::new(&m.per_packet_delays)
}

/// Throughput gain in percent: `100 (multi - single) / single`.
pub fn throughput_gain_percent(multi: f64, single: f64) -> Result<f64> {
    if single == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok(100.0 * (multi - single) / single)
}

/// Delay gain in percent: `100 (single - multi) / multi`, so a delay that
/// halves reads as a 100% gain.
pub fn delay_gain_percent(multi: f64, single: f64) -> Result<f64> {
    if multi == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok(100.0 * (single - multi) / multi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOdds {
    /// Probability that a tagged transmitter shares its band.
    pub p_station_collision: f64,
    /// Probability that some band carries exactly one transmitter.
    pub p_round_success: f64,
}

/// Largest number of assignments `slot_oracle` will enumerate.
pub const SLOT_ORACLE_LIMIT: u64 = 50_000_000;

/// Exact odds for `n` simultaneous single-band RTS frames placed uniformly
/// over the plan's bands, by enumerating all `N^n` assignments.
pub fn slot_oracle(n_transmitters: u32, plan: &BandPlan) -> Result<SlotOdds> {
    let n_bands = plan.n_bands() as u32;
    if n_transmitters == 0 {
        return Err(Error::config("slot oracle needs at least one transmitter"));
    }
    let too_large = || Error::EnumerationTooLarge {
        stations: n_transmitters,
        bands: n_bands,
    };
    let total = (n_bands as u64)
        .checked_pow(n_transmitters)
        .filter(|t| *t <= SLOT_ORACLE_LIMIT)
        .ok_or_else(too_large)?;

    let mut assignment = vec![0u32; n_transmitters as usize];
    let mut counts = vec![0u32; n_bands as usize];
    let mut tagged_collides = 0u64;
    let mut round_succeeds = 0u64;
    for _ in 0..total {
        counts.iter_mut().for_each(|c| *c = 0);
        for &b in &assignment {
            counts[b as usize] += 1;
        }
        if counts[assignment[0] as usize] >= 2 {
            tagged_collides += 1;
        }
        if counts.contains(&1) {
            round_succeeds += 1;
        }
        // odometer increment
        for digit in assignment.iter_mut() {
            *digit += 1;
            if *digit < n_bands {
                break;
            }
            *digit = 0;
        }
    }
    Ok(SlotOdds {
        p_station_collision: tagged_collides as f64 / total as f64,
        p_round_success: round_succeeds as f64 / total as f64,
    })
}
