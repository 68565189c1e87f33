//! Packet-level throughput traces.
//!
//! A [`NetworkTrace`] is the ground-truth channel: an ordered list of packet
//! arrivals, each carrying some megabits of payload. The channel model reads it
//! through [`NetworkTrace::cumulative`], a piecewise-linear "fluid" view of the
//! megabits deliverable since `t = 0`.
//!
//! Traces come from two places: CSV files (`timestamp_seconds,payload_bytes`
//! per line) via [`load_trace`], or the Markov-modulated synthetic generator
//! [`generate_trace`] with the `network1` / `network2` presets.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// Out-of-order timestamps closer than this are clamped instead of rejected.
pub const SORT_JITTER: f64 = 1e-6;

const BYTES_TO_MEGABITS: f64 = 8.0 / 1e6;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("malformed line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("non-positive payload at line {line}")]
    NonPositivePayload { line: usize },
    #[error("negative timestamp at line {line}")]
    NegativeTimestamp { line: usize },
    #[error("timestamps not sorted at line {line}")]
    Unsorted { line: usize },
    #[error("time {t} outside trace range [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("unknown trace preset `{0}` (expected network1 or network2)")]
    UnknownPreset(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One packet arrival: `payload` megabits delivered by `timestamp` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketEvent {
    pub timestamp: f64,
    pub payload: f64,
}

/// Immutable packet trace with a precomputed cumulative-megabits curve.
#[derive(Debug, Clone)]
pub struct NetworkTrace {
    events: Vec<PacketEvent>,
    duration: f64,
    // Knots of the fluid curve. `knot_times[0] == 0`, later knots are the
    // distinct event timestamps; `knot_cum[k]` is the megabits delivered up to
    // and including `knot_times[k]`. A nonzero `knot_cum[0]` means packets
    // stamped exactly at 0, which arrive as a jump just after the origin.
    knot_times: Vec<f64>,
    knot_cum: Vec<f64>,
}

impl NetworkTrace {
    /// Builds a trace, checking the ordering and positivity invariants.
    pub fn new(events: Vec<PacketEvent>, duration: f64) -> Result<Self, TraceError> {
        if events.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut prev = 0.0;
        for (i, ev) in events.iter().enumerate() {
            if !(ev.payload > 0.0) || !ev.payload.is_finite() {
                return Err(TraceError::NonPositivePayload { line: i + 1 });
            }
            if !(ev.timestamp >= 0.0) || !ev.timestamp.is_finite() {
                return Err(TraceError::NegativeTimestamp { line: i + 1 });
            }
            if ev.timestamp < prev {
                return Err(TraceError::Unsorted { line: i + 1 });
            }
            prev = ev.timestamp;
        }
        if !(duration >= prev) || !duration.is_finite() {
            return Err(TraceError::Invalid(format!(
                "duration {duration} precedes last event at {prev}"
            )));
        }

        let mut knot_times = vec![0.0];
        let mut knot_cum = vec![0.0];
        let mut total = 0.0;
        for ev in &events {
            total += ev.payload;
            let last = knot_times.len() - 1;
            if ev.timestamp == knot_times[last] {
                knot_cum[last] = total;
            } else {
                knot_times.push(ev.timestamp);
                knot_cum.push(total);
            }
        }

        Ok(Self {
            events,
            duration,
            knot_times,
            knot_cum,
        })
    }

    pub fn events(&self) -> &[PacketEvent] {
        &self.events
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of all payloads, in megabits.
    pub fn total_megabits(&self) -> f64 {
        *self
            .knot_cum
            .last()
            .expect("trace has at least the origin knot")
    }

    /// Time-average rate over the whole trace, in Mbps.
    pub fn mean_rate(&self) -> f64 {
        if self.duration > 0.0 {
            self.total_megabits() / self.duration
        } else {
            0.0
        }
    }

    /// Megabits deliverable in `[0, t]` under linear interpolation between
    /// consecutive packet timestamps.
    pub fn cumulative(&self, t: f64) -> Result<f64, TraceError> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(TraceError::OutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.cumulative_unchecked(t))
    }

    pub(crate) fn cumulative_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        // First knot at or after t.
        let k = self.knot_times.partition_point(|&kt| kt < t);
        if k == self.knot_times.len() {
            return self.total_megabits();
        }
        if self.knot_times[k] == t {
            return self.knot_cum[k];
        }
        // k >= 1 here because knot_times[0] == 0 < t.
        let (t0, t1) = (self.knot_times[k - 1], self.knot_times[k]);
        let (c0, c1) = (self.knot_cum[k - 1], self.knot_cum[k]);
        c0 + (c1 - c0) * ((t - t0) / (t1 - t0))
    }

    /// Earliest time at which the cumulative curve reaches `target` megabits,
    /// or `None` when the trace never delivers that much.
    pub(crate) fn time_of_cumulative(&self, target: f64) -> Option<f64> {
        if target > self.total_megabits() {
            return None;
        }
        if target <= 0.0 {
            return Some(0.0);
        }
        let k = self.knot_cum.partition_point(|&c| c < target);
        if k == 0 {
            // Satisfied by the jump of packets stamped at 0.
            return Some(0.0);
        }
        let (t0, t1) = (self.knot_times[k - 1], self.knot_times[k]);
        let (c0, c1) = (self.knot_cum[k - 1], self.knot_cum[k]);
        let t = t0 + (t1 - t0) * ((target - c0) / (c1 - c0));
        Some(t.min(t1))
    }

    /// Writes the trace in the `timestamp_seconds,payload_bytes` format.
    pub fn save<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut buf = String::with_capacity(32 * self.events.len() + 32);
        buf.push_str("timestamp,payload_bytes\n");
        for ev in &self.events {
            let _ = writeln!(
                buf,
                "{:.9},{:.9}",
                ev.timestamp,
                ev.payload / BYTES_TO_MEGABITS
            );
        }
        out.write_all(buf.as_bytes())
    }
}

/// Parses a trace CSV. Payloads are converted from bytes to megabits.
///
/// The first line may be a header. Blank lines are ignored. A timestamp that
/// goes backwards by at most [`SORT_JITTER`] is clamped to its predecessor.
pub fn load_trace<R: BufRead>(source: R) -> Result<NetworkTrace, TraceError> {
    let mut events = Vec::new();
    let mut prev = 0.0_f64;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let (ts, bytes) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(TraceError::Malformed {
                    line: line_no,
                    reason: "expected `timestamp,payload_bytes`".into(),
                })
            }
        };
        let parsed = (f64::from_str(ts), f64::from_str(bytes));
        let (ts, bytes) = match parsed {
            (Ok(ts), Ok(bytes)) if ts.is_finite() && bytes.is_finite() => (ts, bytes),
            _ if line_no == 1 && events.is_empty() => continue, // header
            _ => {
                return Err(TraceError::Malformed {
                    line: line_no,
                    reason: format!("cannot parse `{line}` as two numbers"),
                })
            }
        };
        if bytes <= 0.0 {
            return Err(TraceError::NonPositivePayload { line: line_no });
        }
        if ts < 0.0 {
            return Err(TraceError::NegativeTimestamp { line: line_no });
        }
        let ts = if ts < prev {
            if prev - ts > SORT_JITTER {
                return Err(TraceError::Unsorted { line: line_no });
            }
            prev
        } else {
            ts
        };
        prev = ts;
        events.push(PacketEvent {
            timestamp: ts,
            payload: bytes * BYTES_TO_MEGABITS,
        });
    }
    if events.is_empty() {
        return Err(TraceError::Empty);
    }
    let duration = events.last().map(|e| e.timestamp).unwrap_or(0.0);
    NetworkTrace::new(events, duration)
}

/// Parameters of the Markov-modulated constant-packet generator.
///
/// The rate process jumps between `state_rates` after exponentially
/// distributed dwell times; at every jump the next state is drawn uniformly
/// (possibly the same state again), so the long-run mean is the plain
/// average of `state_rates`. `mean_rate` must agree with that average.
/// Within a state, packets are evenly spaced at `packet_size / rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGenSpec {
    pub mean_rate: f64,
    pub state_rates: Vec<f64>,
    pub transition_dwell_mean: f64,
    pub packet_size: f64,
    pub seed: u64,
    pub duration: f64,
}

/// Rate multipliers shared by both presets (average 1.0).
pub const PRESET_RATE_PROFILE: [f64; 7] = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
/// Mean dwell of the preset rate process, in seconds.
pub const PRESET_DWELL_MEAN: f64 = 0.1;
/// Preset packet size: one 1500-byte MTU, in megabits.
pub const PRESET_PACKET_SIZE: f64 = 0.012;
/// Preset length: 120 s training + 300 s scoring + 30 s tail.
pub const PRESET_DURATION: f64 = 450.0;

impl TraceGenSpec {
    pub fn num_states(&self) -> usize {
        self.state_rates.len()
    }

    /// A spec whose states are `mean_rate` scaled by [`PRESET_RATE_PROFILE`].
    pub fn with_mean(mean_rate: f64, seed: u64) -> Self {
        Self {
            mean_rate,
            state_rates: PRESET_RATE_PROFILE.iter().map(|m| m * mean_rate).collect(),
            transition_dwell_mean: PRESET_DWELL_MEAN,
            packet_size: PRESET_PACKET_SIZE,
            seed,
            duration: PRESET_DURATION,
        }
    }

    /// `network1` (≈12 Mbps) or `network2` (≈8 Mbps).
    pub fn preset(name: &str, seed: u64) -> Result<Self, TraceError> {
        match name {
            "network1" => Ok(Self::with_mean(12.0, seed)),
            "network2" => Ok(Self::with_mean(8.0, seed)),
            other => Err(TraceError::UnknownPreset(other.to_string())),
        }
    }

    /// A single-state (constant rate) spec.
    pub fn constant(rate: f64, packet_size: f64, duration: f64) -> Self {
        Self {
            mean_rate: rate,
            state_rates: vec![rate],
            transition_dwell_mean: duration,
            packet_size,
            seed: 0,
            duration,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::InvalidSpec(msg));
        if self.state_rates.is_empty() {
            return bad("at least one rate state is required".into());
        }
        if self
            .state_rates
            .iter()
            .any(|r| !(*r > 0.0 && r.is_finite()))
        {
            return bad("all state rates must be positive".into());
        }
        if !(self.transition_dwell_mean > 0.0) {
            return bad("dwell mean must be positive".into());
        }
        if !(self.packet_size > 0.0) {
            return bad("packet size must be positive".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        let avg = self.state_rates.iter().sum::<f64>() / self.state_rates.len() as f64;
        if (avg - self.mean_rate).abs() > 0.01 * self.mean_rate {
            return bad(format!(
                "mean_rate {} disagrees with average state rate {avg}",
                self.mean_rate
            ));
        }
        Ok(())
    }
}

/// Synthesizes a trace. The output is a pure function of `spec`.
pub fn generate_trace(spec: &TraceGenSpec) -> Result<NetworkTrace, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dwell = Exp::new(1.0 / spec.transition_dwell_mean)
        .map_err(|e| TraceError::InvalidSpec(e.to_string()))?;
    let n_states = spec.state_rates.len();
    let horizon = spec.duration * (1.0 + 1e-12);
    let packet = spec.packet_size;

    let mut events = Vec::with_capacity((spec.mean_rate * spec.duration / packet) as usize + 16);
    let mut state = rng.random_range(0..n_states);
    let mut seg_start = 0.0_f64;
    // Rate-integral (Mb) still owed before the next packet is released.
    let mut owed = packet;

    while seg_start < spec.duration {
        let seg_end = if n_states == 1 {
            f64::INFINITY
        } else {
            seg_start + dwell.sample(&mut rng)
        };
        let rate = spec.state_rates[state];
        // Placed from the segment anchor so spacing errors never accumulate.
        let mut released = 0.0_f64;
        let mut offset = owed;
        loop {
            let at = seg_start + offset / rate;
            if at > seg_end || at > horizon {
                break;
            }
            events.push(PacketEvent {
                timestamp: at.min(spec.duration),
                payload: packet,
            });
            released += 1.0;
            offset = owed + released * packet;
        }
        if seg_end >= spec.duration {
            break;
        }
        owed = offset - rate * (seg_end - seg_start);
        seg_start = seg_end;
        if n_states > 1 {
            state = rng.random_range(0..n_states);
        }
    }
    NetworkTrace::new(events, spec.duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(events: &[(f64, f64)], duration: f64) -> NetworkTrace {
        let ev = events
            .iter()
            .map(|&(timestamp, payload)| PacketEvent { timestamp, payload })
            .collect();
        NetworkTrace::new(ev, duration).unwrap()
    }

    #[test]
    fn loads_bytes_as_megabits() {
        let t = load_trace("0.0,125000\n1.0,125000".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.events()[0].payload, 1.0);
        assert_eq!(t.events()[1].payload, 1.0);
        assert_eq!(t.duration(), 1.0);
    }

    #[test]
    fn header_and_blank_lines_are_skipped() {
        let t = load_trace("timestamp,payload_bytes\n\n0.5,1000\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn load_errors() {
        let err = load_trace("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty trace");
        let err = load_trace("1.0,100\n0.5,100".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "timestamps not sorted at line 2");
        let err = load_trace("0.1,100\n0.2,-5".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::NonPositivePayload { line: 2 }));
        let err = load_trace("0.1,100\nabc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }));
        let err = load_trace("0.1,100\n0.2,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }));
    }

    #[test]
    fn sub_microsecond_reordering_is_clamped() {
        let t = load_trace("1.0,100\n0.9999995,100\n".as_bytes()).unwrap();
        assert_eq!(t.events()[1].timestamp, 1.0);
    }

    #[test]
    fn cumulative_interpolates_between_packets() {
        let t = trace(&[(1.0, 2.0), (2.0, 2.0)], 2.0);
        assert_eq!(t.cumulative(0.0).unwrap(), 0.0);
        assert_eq!(t.cumulative(1.0).unwrap(), 2.0);
        assert_eq!(t.cumulative(1.5).unwrap(), 3.0);
        assert_eq!(t.cumulative(2.0).unwrap(), 4.0);
        assert!(t.cumulative(2.5).is_err());
        assert!(t.cumulative(-0.1).is_err());
    }

    #[test]
    fn cumulative_is_flat_after_last_packet() {
        let t = trace(&[(1.0, 2.0)], 3.0);
        assert_eq!(t.cumulative(2.5).unwrap(), 2.0);
    }

    #[test]
    fn simultaneous_packets_collapse_into_one_knot() {
        let t = trace(&[(1.0, 1.0), (1.0, 1.0), (2.0, 1.0)], 2.0);
        assert_eq!(t.cumulative(0.5).unwrap(), 1.0);
        assert_eq!(t.cumulative(1.0).unwrap(), 2.0);
        assert_eq!(t.total_megabits(), 3.0);
    }

    #[test]
    fn constructor_rejects_bad_events() {
        let ev = |timestamp, payload| PacketEvent { timestamp, payload };
        assert!(NetworkTrace::new(vec![], 1.0).is_err());
        assert!(NetworkTrace::new(vec![ev(1.0, 0.0)], 1.0).is_err());
        assert!(NetworkTrace::new(vec![ev(-1.0, 1.0)], 1.0).is_err());
        assert!(NetworkTrace::new(vec![ev(1.0, 1.0), ev(0.5, 1.0)], 1.0).is_err());
        assert!(NetworkTrace::new(vec![ev(1.0, 1.0)], 0.5).is_err());
    }

    #[test]
    fn single_state_generator_spacing() {
        let spec = TraceGenSpec::constant(8.0, 0.01, 10.0);
        let t = generate_trace(&spec).unwrap();
        assert_eq!(t.len(), 8000);
        let gap = t.events()[1].timestamp - t.events()[0].timestamp;
        assert!((gap - 0.00125).abs() < 1e-12);
        assert!((t.events()[0].timestamp - 0.00125).abs() < 1e-12);
        assert!((t.events()[7999].timestamp - 10.0).abs() < 1e-9);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = TraceGenSpec {
            duration: 20.0,
            ..TraceGenSpec::with_mean(8.0, 7)
        };
        let a = generate_trace(&spec).unwrap();
        let b = generate_trace(&spec).unwrap();
        assert_eq!(a.events(), b.events());
        let c = generate_trace(&TraceGenSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.events(), c.events());
    }

    #[test]
    fn generator_tracks_state_rates() {
        // Two states with long dwell: the fluid rate between packets must be
        // one of the state rates except at the straddling packets.
        let spec = TraceGenSpec {
            mean_rate: 6.0,
            state_rates: vec![4.0, 8.0],
            transition_dwell_mean: 1.0,
            packet_size: 0.01,
            seed: 3,
            duration: 30.0,
        };
        let t = generate_trace(&spec).unwrap();
        let ev = t.events();
        let exact = ev
            .windows(2)
            .map(|w| 0.01 / (w[1].timestamp - w[0].timestamp))
            .filter(|r| (r - 4.0).abs() < 1e-6 || (r - 8.0).abs() < 1e-6)
            .count();
        assert!(exact as f64 > 0.95 * (ev.len() - 1) as f64);
    }

    #[test]
    fn spec_validation() {
        let good = TraceGenSpec::with_mean(12.0, 1);
        assert!(good.validate().is_ok());
        assert!(TraceGenSpec {
            state_rates: vec![],
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(TraceGenSpec {
            state_rates: vec![12.0, -1.0],
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(TraceGenSpec {
            transition_dwell_mean: 0.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(TraceGenSpec {
            duration: 0.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(TraceGenSpec {
            mean_rate: 20.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(TraceGenSpec::preset("network3", 0).is_err());
    }

    #[test]
    fn time_of_cumulative_inverts_cumulative() {
        let t = trace(&[(1.0, 2.0), (2.0, 2.0)], 2.0);
        assert_eq!(t.time_of_cumulative(1.0), Some(0.5));
        assert_eq!(t.time_of_cumulative(3.0), Some(1.5));
        assert_eq!(t.time_of_cumulative(4.0), Some(2.0));
        assert_eq!(t.time_of_cumulative(4.5), None);
    }
}
