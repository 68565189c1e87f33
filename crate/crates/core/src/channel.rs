//! Frame transmission over a trace.
//!
//! The channel answers one question: a frame of `size` megabits starts at
//! `start`; when is its last bit delivered? Frames never abort once started.

use crate::trace::NetworkTrace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    /// The trace ends before the frame completes. This marks the end of a
    /// simulation rather than a defect.
    #[error("trace exhausted: {remaining} Mb left after t={start}, frame needs {size} Mb")]
    Exhausted {
        start: f64,
        size: f64,
        remaining: f64,
    },
    #[error("invalid transmission request: start={start}, size={size}")]
    InvalidRequest { start: f64, size: f64 },
    #[error("frame of {size} Mb completed instantly at t={start}")]
    ZeroDuration { start: f64, size: f64 },
}

/// Outcome of one frame transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionResult {
    pub start: f64,
    pub finish_time: f64,
    /// Transmission time `t_i`, seconds.
    pub duration: f64,
    /// Average throughput during the transmission `C_i = s_i / t_i`, Mbps.
    pub achieved_throughput: f64,
}

/// Transmits `size` megabits starting at `start`.
///
/// The finish time is the first instant at which the trace has delivered
/// `size` megabits beyond what it had delivered at `start`.
pub fn transmit(
    trace: &NetworkTrace,
    start: f64,
    size: f64,
) -> Result<TransmissionResult, ChannelError> {
    if !(size > 0.0 && size.is_finite() && start >= 0.0 && start.is_finite()) {
        return Err(ChannelError::InvalidRequest { start, size });
    }
    if start > trace.duration() {
        return Err(ChannelError::Exhausted {
            start,
            size,
            remaining: 0.0,
        });
    }
    let base = trace.cumulative_unchecked(start);
    let finish = trace
        .time_of_cumulative(base + size)
        .ok_or(ChannelError::Exhausted {
            start,
            size,
            remaining: trace.total_megabits() - base,
        })?;
    // Interpolation can land a hair before `start` when the target falls in
    // the same segment; never let time run backwards.
    let finish = finish.max(start);
    let duration = finish - start;
    if !(duration > 0.0) {
        return Err(ChannelError::ZeroDuration { start, size });
    }
    Ok(TransmissionResult {
        start,
        finish_time: finish,
        duration,
        achieved_throughput: size / duration,
    })
}

/// Megabits the trace can deliver in `(from, to]`, clamped to the trace.
pub fn deliverable(trace: &NetworkTrace, from: f64, to: f64) -> f64 {
    let d = trace.duration();
    let a = from.clamp(0.0, d);
    let b = to.clamp(0.0, d);
    if b <= a {
        return 0.0;
    }
    trace.cumulative_unchecked(b) - trace.cumulative_unchecked(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_trace, PacketEvent, TraceGenSpec};

    fn trace(events: &[(f64, f64)], duration: f64) -> NetworkTrace {
        let ev = events
            .iter()
            .map(|&(timestamp, payload)| PacketEvent { timestamp, payload })
            .collect();
        NetworkTrace::new(ev, duration).unwrap()
    }

    #[test]
    fn constant_rate_channel() {
        let t = generate_trace(&TraceGenSpec::constant(10.0, 0.001, 5.0)).unwrap();
        let r = transmit(&t, 0.0, 1.0).unwrap();
        assert!((r.finish_time - 0.1).abs() < 1e-12);
        assert!((r.achieved_throughput - 10.0).abs() < 1e-9);
    }

    #[test]
    fn finish_inside_first_segment() {
        let t = trace(&[(1.0, 2.0)], 1.0);
        let r = transmit(&t, 0.0, 1.0).unwrap();
        assert_eq!(r.finish_time, 0.5);
        assert_eq!(r.duration, 0.5);
        assert_eq!(r.achieved_throughput, 2.0);
    }

    #[test]
    fn exhaustion_is_signalled() {
        let t = trace(&[(1.0, 2.0)], 1.0);
        let err = transmit(&t, 0.5, 1.5).unwrap_err();
        assert!(matches!(err, ChannelError::Exhausted { .. }));
        assert!(transmit(&t, 2.0, 0.1).is_err());
    }

    #[test]
    fn rejects_bad_requests() {
        let t = trace(&[(1.0, 2.0)], 1.0);
        assert!(matches!(
            transmit(&t, 0.0, 0.0),
            Err(ChannelError::InvalidRequest { .. })
        ));
        assert!(matches!(
            transmit(&t, -1.0, 1.0),
            Err(ChannelError::InvalidRequest { .. })
        ));
    }

    #[test]
    fn packets_at_origin_cannot_carry_a_whole_frame_instantly() {
        let t = trace(&[(0.0, 1.0), (1.0, 1.0)], 1.0);
        assert!(matches!(
            transmit(&t, 0.0, 0.5),
            Err(ChannelError::ZeroDuration { .. })
        ));
        let r = transmit(&t, 0.0, 1.5).unwrap();
        assert_eq!(r.finish_time, 0.5);
    }

    #[test]
    fn deliverable_matches_cumulative_difference() {
        let t = trace(&[(1.0, 2.0), (2.0, 2.0)], 2.0);
        assert_eq!(deliverable(&t, 0.5, 1.5), 2.0);
        assert_eq!(deliverable(&t, 1.5, 0.5), 0.0);
        assert_eq!(deliverable(&t, 1.5, 9.0), 1.0);
    }
}
