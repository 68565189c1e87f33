//! The uploader loop.
//!
//! Frames are generated every `1/fps` seconds (frame `i` at `i/fps`). The
//! uploader sends one frame at a time: it picks a frame, asks the controller
//! for a size, transmits it over the trace, logs `(s_i, t_i)` and repeats.
//! A frame is lost when it is never sent or when it finishes after its
//! deadline. Frames generated during the training span are sent (they build
//! the history) but not scored.
//!
//! Two frame-selection policies are available:
//!
//! * [`FramePolicy::DeadlineFifo`] (default): every frame must finish by
//!   `t_g(i+1) + t_B`. The uploader sends the oldest unsent frame whose
//!   deadline has not yet passed and drops the expired ones. The buffer left
//!   for frame `i` is `t_b = clamp(t_B − (t_s − t_g(i+1)), 0, t_B)`, so it is
//!   eaten up whenever the uploader falls behind the generation schedule.
//! * [`FramePolicy::NewestFirst`]: the uploader always jumps to the newest
//!   generated frame and drops everything older. The buffer evolves as
//!   `t_b ← clamp(t_b + 1/fps − t_i, 0, t_B)` and is recomputed from the
//!   selected frame's lag whenever frames were dropped.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::channel::{self, ChannelError};
use crate::controllers::{decide, ControllerConfig, ControllerError, SizingContext};
use crate::history::HistoryLog;
use crate::trace::NetworkTrace;

/// Finishing this close after the deadline still counts as on time.
pub const DEADLINE_SLACK: f64 = 1e-9;

// Clock tolerance when deciding whether a frame has been generated.
const GEN_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FramePolicy {
    #[default]
    DeadlineFifo,
    NewestFirst,
}

impl std::str::FromStr for FramePolicy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fifo" | "deadline-fifo" => Ok(FramePolicy::DeadlineFifo),
            "newest" | "newest-first" => Ok(FramePolicy::NewestFirst),
            other => Err(SimError::InvalidConfig(format!(
                "frame policy `{other}` (expected fifo or newest)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Initial (and maximal) buffer time `t_B`, seconds.
    pub buffer: f64,
    pub fps: f64,
    pub training_seconds: f64,
    pub measured_seconds: f64,
    pub policy: FramePolicy,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            buffer: 1.0 / 60.0,
            fps: 60.0,
            training_seconds: 120.0,
            measured_seconds: 300.0,
            policy: FramePolicy::DeadlineFifo,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(self.buffer >= 0.0 && self.buffer.is_finite()) {
            return bad("buffer time must be non-negative");
        }
        if !(self.training_seconds >= 0.0) {
            return bad("training span must be non-negative");
        }
        if !(self.measured_seconds > 0.0 && self.measured_seconds.is_finite()) {
            return bad("measured span must be positive");
        }
        Ok(())
    }

    fn gen_time(&self, index: usize) -> f64 {
        index as f64 / self.fps
    }

    fn frames_until(&self, seconds: f64) -> usize {
        (seconds * self.fps).round() as usize
    }

    /// Index of the newest frame generated at or before `clock`.
    fn newest_generated(&self, clock: f64) -> usize {
        (clock * self.fps + GEN_SLACK).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FrameStatus {
    #[serde(rename = "sent-on-time")]
    OnTime,
    #[serde(rename = "sent-late")]
    Late,
    #[serde(rename = "skipped")]
    Skipped,
}

impl FrameStatus {
    pub fn name(self) -> &'static str {
        match self {
            FrameStatus::OnTime => "sent-on-time",
            FrameStatus::Late => "sent-late",
            FrameStatus::Skipped => "skipped",
        }
    }

    pub fn is_loss(self) -> bool {
        self != FrameStatus::OnTime
    }
}

impl fmt::Display for FrameStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss test: late iff `start + size/C > gen_next + t_b`.
pub fn deadline_check(
    start: f64,
    size: f64,
    achieved_throughput: f64,
    gen_next: f64,
    buffer: f64,
) -> FrameStatus {
    if start + size / achieved_throughput > gen_next + buffer + DEADLINE_SLACK {
        FrameStatus::Late
    } else {
        FrameStatus::OnTime
    }
}

/// One row of the per-frame ledger. Skipped frames have size 0 and
/// `start == finish ==` the time they were dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameOutcome {
    pub index: usize,
    pub gen_time: f64,
    pub status: FrameStatus,
    #[serde(rename = "size_mb")]
    pub size: f64,
    pub start: f64,
    pub finish: f64,
    pub deadline: f64,
    /// Buffer time `t_b` the controller saw.
    #[serde(skip)]
    pub buffer: f64,
    #[serde(skip)]
    pub fallback: bool,
}

impl FrameOutcome {
    pub fn is_sent(&self) -> bool {
        self.status != FrameStatus::Skipped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    /// Ledger of scored frames, in index order.
    pub outcomes: Vec<FrameOutcome>,
    pub loss_rate: f64,
    /// Scored megabits sent per second of the measured period, Mbps.
    pub avg_bitrate: f64,
    pub measured_period: f64,
    pub training_period: f64,
    pub on_time: usize,
    pub late: usize,
    pub skipped: usize,
    /// Scored frame whose transmission the trace could not finish (0 or 1).
    pub in_flight: usize,
    pub truncated: bool,
    /// Scored decisions that fell back (short history or empty conditioning).
    pub fallbacks: usize,
}

impl SimulationReport {
    pub fn generated(&self) -> usize {
        self.outcomes.len() + self.in_flight
    }

    /// Writes the ledger as `index,gen_time,status,size_mb,start,finish,deadline`.
    pub fn write_ledger_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for o in &self.outcomes {
            w.serialize(o)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Ledger {
    scored_from: usize,
    outcomes: Vec<FrameOutcome>,
}

impl Ledger {
    fn record(&mut self, outcome: FrameOutcome) {
        if outcome.index >= self.scored_from {
            self.outcomes.push(outcome);
        }
    }

    fn skip(&mut self, index: usize, sim: &SimulationConfig, at: f64, deadline: f64) {
        self.record(FrameOutcome {
            index,
            gen_time: sim.gen_time(index),
            status: FrameStatus::Skipped,
            size: 0.0,
            start: at,
            finish: at,
            deadline,
            buffer: 0.0,
            fallback: false,
        });
    }
}

/// A frame the loop has picked and the buffer state it is sent under.
struct Pick {
    index: usize,
    start: f64,
    buffer: f64,
    time_to_next: f64,
}

/// Runs one simulation over `trace`.
pub fn run(
    trace: &NetworkTrace,
    cfg: &ControllerConfig,
    sim: &SimulationConfig,
) -> Result<SimulationReport, SimError> {
    cfg.validate()?;
    sim.validate()?;

    let scored_from = sim.frames_until(sim.training_seconds);
    let horizon = sim.frames_until(sim.training_seconds + sim.measured_seconds);
    let period = 1.0 / sim.fps;

    let mut history = HistoryLog::new();
    let mut ledger = Ledger {
        scored_from,
        outcomes: Vec::with_capacity(horizon.saturating_sub(scored_from)),
    };
    let mut clock = 0.0_f64;
    let mut next = 0_usize;
    // Carried buffer for the newest-first policy.
    let mut carried = sim.buffer;
    let mut cut_at: Option<usize> = None;

    while next < horizon {
        if sim.gen_time(next) > clock {
            clock = sim.gen_time(next);
        }
        let newest = sim.newest_generated(clock).min(horizon - 1);
        // Snap onto a generation instant the slack let us see early.
        clock = clock.max(sim.gen_time(newest));

        let pick = match sim.policy {
            FramePolicy::DeadlineFifo => {
                while next <= newest && clock >= sim.gen_time(next + 1) + sim.buffer {
                    ledger.skip(next, sim, clock, sim.gen_time(next + 1) + sim.buffer);
                    next += 1;
                }
                if next > newest {
                    continue;
                }
                let gen_next = sim.gen_time(next + 1);
                Pick {
                    index: next,
                    start: clock,
                    buffer: fifo_buffer(sim.buffer, clock, gen_next),
                    time_to_next: (gen_next - clock).max(0.0),
                }
            }
            FramePolicy::NewestFirst => {
                let dropped = newest > next;
                while next < newest {
                    ledger.skip(next, sim, clock, sim.gen_time(next + 1) + carried);
                    next += 1;
                }
                if dropped {
                    carried = (sim.buffer - (clock - sim.gen_time(newest) - period))
                        .clamp(0.0, sim.buffer);
                }
                Pick {
                    index: newest,
                    start: clock,
                    buffer: carried,
                    time_to_next: (sim.gen_time(newest + 1) - clock).max(0.0),
                }
            }
        };

        let ctx = SizingContext {
            buffer: pick.buffer,
            time_to_next: pick.time_to_next,
            history: &history,
            fps: sim.fps,
        };
        let decision = decide(cfg, &ctx);
        let sent = match channel::transmit(trace, pick.start, decision.size) {
            Ok(r) => r,
            Err(ChannelError::Exhausted { .. }) => {
                cut_at = Some(pick.index);
                break;
            }
            Err(e) => return Err(e.into()),
        };

        let gen_next = sim.gen_time(pick.index + 1);
        // When the frame starts after t_g(i+1) its budget is t_b alone.
        let anchor = gen_next.max(pick.start);
        let status = deadline_check(
            pick.start,
            decision.size,
            sent.achieved_throughput,
            anchor,
            pick.buffer,
        );
        history
            .append(decision.size, sent.duration)
            .expect("channel returns positive durations");
        ledger.record(FrameOutcome {
            index: pick.index,
            gen_time: sim.gen_time(pick.index),
            status,
            size: decision.size,
            start: pick.start,
            finish: sent.finish_time,
            deadline: anchor + pick.buffer,
            buffer: pick.buffer,
            fallback: decision.fallback_used,
        });

        if sim.policy == FramePolicy::NewestFirst {
            carried = (carried + period - sent.duration).clamp(0.0, sim.buffer);
        }
        clock = sent.finish_time;
        next = pick.index + 1;
    }

    let (end_index, in_flight) = match cut_at {
        Some(i) => (i.max(scored_from), usize::from(i >= scored_from)),
        None => (horizon, 0),
    };
    // A cut can leave already-dropped frames past the in-flight one; they
    // fall outside the shortened measured period.
    ledger.outcomes.retain(|o| o.index < end_index);
    let outcomes = ledger.outcomes;
    let measured_period = (end_index - scored_from) as f64 / sim.fps;

    let count = |s: FrameStatus| outcomes.iter().filter(|o| o.status == s).count();
    let (on_time, late, skipped) = (
        count(FrameStatus::OnTime),
        count(FrameStatus::Late),
        count(FrameStatus::Skipped),
    );
    let loss_rate = if outcomes.is_empty() {
        0.0
    } else {
        (late + skipped) as f64 / outcomes.len() as f64
    };
    let sent_mb: f64 = outcomes.iter().map(|o| o.size).sum();
    let avg_bitrate = if measured_period > 0.0 {
        sent_mb / measured_period
    } else {
        0.0
    };
    let fallbacks = outcomes.iter().filter(|o| o.fallback).count();

    Ok(SimulationReport {
        outcomes,
        loss_rate,
        avg_bitrate,
        measured_period,
        training_period: scored_from as f64 / sim.fps,
        on_time,
        late,
        skipped,
        in_flight,
        truncated: cut_at.is_some(),
        fallbacks,
    })
}

/// Buffer left for a frame started at `start` whose successor is generated at
/// `gen_next`: whatever part of `t_B` the lag behind `gen_next` has not used.
pub fn fifo_buffer(buffer_max: f64, start: f64, gen_next: f64) -> f64 {
    (buffer_max - (start - gen_next)).clamp(0.0, buffer_max)
}

/// Independent consistency audit of a report: frame conservation, ordering,
/// buffer bounds and the metric identities.
pub fn audit(report: &SimulationReport, sim: &SimulationConfig) -> Result<(), String> {
    let scored_from = (sim.training_seconds * sim.fps).round() as usize;
    let expected_frames = (report.measured_period * sim.fps).round() as usize;

    // Conservation: every scored index appears exactly once.
    if report.outcomes.len() != expected_frames {
        return Err(format!(
            "ledger has {} frames, measured period implies {expected_frames}",
            report.outcomes.len()
        ));
    }
    for (k, o) in report.outcomes.iter().enumerate() {
        if o.index != scored_from + k {
            return Err(format!("ledger slot {k} holds frame {}", o.index));
        }
    }
    let tally = report.on_time + report.late + report.skipped;
    if tally != report.outcomes.len() || report.in_flight > 1 {
        return Err(format!(
            "status counts {tally} (+{} in flight) do not cover {} frames",
            report.in_flight,
            report.outcomes.len()
        ));
    }

    // Transmissions are sequential and never overlap.
    let mut prev_finish = f64::NEG_INFINITY;
    let mut prev_start = f64::NEG_INFINITY;
    for o in report.outcomes.iter().filter(|o| o.is_sent()) {
        if !(o.start > prev_start) || o.start < prev_finish - 1e-12 {
            return Err(format!(
                "frame {} overlaps the previous transmission",
                o.index
            ));
        }
        if !(o.finish > o.start) {
            return Err(format!("frame {} has non-positive duration", o.index));
        }
        if o.start + 1e-12 < o.gen_time {
            return Err(format!("frame {} sent before it was generated", o.index));
        }
        if !(o.buffer >= 0.0 && o.buffer <= sim.buffer + 1e-12) {
            return Err(format!(
                "frame {} saw buffer {} outside [0, t_B]",
                o.index, o.buffer
            ));
        }
        let late = o.finish > o.deadline + DEADLINE_SLACK;
        if late != (o.status == FrameStatus::Late) {
            return Err(format!(
                "frame {} status disagrees with its deadline",
                o.index
            ));
        }
        prev_start = o.start;
        prev_finish = o.finish;
    }
    for o in report.outcomes.iter().filter(|o| !o.is_sent()) {
        if o.size != 0.0 {
            return Err(format!("skipped frame {} carries a size", o.index));
        }
    }

    // Metric identities, recomputed from the ledger.
    let losses = report
        .outcomes
        .iter()
        .filter(|o| o.status.is_loss())
        .count();
    let loss = if report.outcomes.is_empty() {
        0.0
    } else {
        losses as f64 / report.outcomes.len() as f64
    };
    if loss != report.loss_rate {
        return Err(format!("loss rate {} != ledger {loss}", report.loss_rate));
    }
    if report.measured_period > 0.0 {
        let mb: f64 = report
            .outcomes
            .iter()
            .filter(|o| o.is_sent())
            .map(|o| o.size)
            .sum();
        let rate = mb / report.measured_period;
        if (rate - report.avg_bitrate).abs() > 1e-9 * rate.max(1.0) {
            return Err(format!("bitrate {} != ledger {rate}", report.avg_bitrate));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::Strategy;
    use crate::trace::{generate_trace, PacketEvent, TraceGenSpec};

    fn constant_trace(rate: f64, duration: f64) -> NetworkTrace {
        generate_trace(&TraceGenSpec::constant(rate, 0.001, duration)).unwrap()
    }

    fn short_sim(buffer: f64) -> SimulationConfig {
        SimulationConfig {
            buffer,
            fps: 60.0,
            training_seconds: 5.0,
            measured_seconds: 20.0,
            policy: FramePolicy::DeadlineFifo,
        }
    }

    #[test]
    fn deadline_examples() {
        let g = 1.0 / 60.0;
        assert_eq!(deadline_check(0.0, 1.0, 10.0, g, 0.1), FrameStatus::OnTime);
        assert_eq!(deadline_check(0.0, 2.0, 10.0, g, 0.1), FrameStatus::Late);
        assert_eq!(
            deadline_check(0.0, 1.0, 10.0, 0.05, 0.05),
            FrameStatus::OnTime
        );
    }

    #[test]
    fn min_size_on_constant_channel() {
        let trace = constant_trace(10.0, 30.0);
        let cfg = ControllerConfig::new(Strategy::MinSize).with_s_min(0.1);
        let report = run(&trace, &cfg, &short_sim(1.0 / 60.0)).unwrap();
        assert_eq!(report.loss_rate, 0.0);
        assert!((report.avg_bitrate - 6.0).abs() < 1e-9);
        assert_eq!(report.outcomes.len(), 1200);
        audit(&report, &short_sim(1.0 / 60.0)).unwrap();
    }

    #[test]
    fn conditional_saturates_constant_channel() {
        let trace = constant_trace(10.0, 30.0);
        let sim = short_sim(1.0 / 60.0);
        let report = run(&trace, &ControllerConfig::default(), &sim).unwrap();
        assert_eq!(report.loss_rate, 0.0);
        assert!(report.avg_bitrate > 9.5, "{}", report.avg_bitrate);
        audit(&report, &sim).unwrap();
    }

    #[test]
    fn oversized_frames_lose_regardless_of_strategy() {
        let trace = constant_trace(10.0, 40.0);
        let sim = short_sim(1.0 / 60.0);
        for strategy in [Strategy::MinSize, Strategy::ConditionalQuantile] {
            let cfg = ControllerConfig::new(strategy).with_s_min(0.5);
            let report = run(&trace, &cfg, &sim).unwrap();
            assert!(report.loss_rate > 0.0);
            audit(&report, &sim).unwrap();
        }
    }

    #[test]
    fn newest_first_policy_also_conserves_frames() {
        let trace = generate_trace(&TraceGenSpec {
            duration: 40.0,
            ..TraceGenSpec::with_mean(8.0, 2)
        })
        .unwrap();
        let sim = SimulationConfig {
            policy: FramePolicy::NewestFirst,
            ..short_sim(3.0 / 60.0)
        };
        let report = run(&trace, &ControllerConfig::default(), &sim).unwrap();
        audit(&report, &sim).unwrap();
        assert!(report.skipped > 0);
    }

    #[test]
    fn short_trace_truncates() {
        let trace = constant_trace(10.0, 10.0);
        let sim = short_sim(1.0 / 60.0);
        let cfg = ControllerConfig::new(Strategy::MinSize).with_s_min(0.1);
        let report = run(&trace, &cfg, &sim).unwrap();
        assert!(report.truncated);
        assert!(report.measured_period < 5.0 + 1e-9);
        assert_eq!(report.generated(), report.outcomes.len() + report.in_flight);
        audit(&report, &sim).unwrap();
    }

    #[test]
    fn deterministic() {
        let trace = generate_trace(&TraceGenSpec {
            duration: 30.0,
            ..TraceGenSpec::with_mean(12.0, 5)
        })
        .unwrap();
        let sim = short_sim(2.0 / 60.0);
        let a = run(&trace, &ControllerConfig::default(), &sim).unwrap();
        let b = run(&trace, &ControllerConfig::default(), &sim).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_csv_columns() {
        let trace = NetworkTrace::new(
            (1..=2000)
                .map(|k| PacketEvent {
                    timestamp: k as f64 * 0.01,
                    payload: 0.1,
                })
                .collect(),
            20.0,
        )
        .unwrap();
        let sim = SimulationConfig {
            training_seconds: 0.0,
            measured_seconds: 0.05,
            ..short_sim(1.0 / 60.0)
        };
        let cfg = ControllerConfig::new(Strategy::MinSize).with_s_min(0.05);
        let report = run(&trace, &cfg, &sim).unwrap();
        let mut out = Vec::new();
        report.write_ledger_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("index,gen_time,status,size_mb,start,finish,deadline")
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("0,0.0,sent-on-time,0.05,0.0,0.005"));
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn invalid_configs() {
        let trace = constant_trace(10.0, 5.0);
        let cfg = ControllerConfig::default();
        for sim in [
            SimulationConfig {
                fps: 0.0,
                ..short_sim(0.01)
            },
            SimulationConfig {
                buffer: -1.0,
                ..short_sim(0.01)
            },
            SimulationConfig {
                measured_seconds: 0.0,
                ..short_sim(0.01)
            },
        ] {
            assert!(matches!(
                run(&trace, &cfg, &sim),
                Err(SimError::InvalidConfig(_))
            ));
        }
        let bad = ControllerConfig {
            epsilon: 0.0,
            ..cfg
        };
        assert!(run(&trace, &bad, &short_sim(0.01)).is_err());
    }

    #[test]
    fn fifo_buffer_is_eaten_by_lag() {
        assert_eq!(fifo_buffer(0.1, 0.5, 0.6), 0.1);
        assert!((fifo_buffer(0.1, 0.63, 0.6) - 0.07).abs() < 1e-12);
        assert_eq!(fifo_buffer(0.1, 0.8, 0.6), 0.0);
    }
}
