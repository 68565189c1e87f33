//! Uploader-side frame history and backward interval aggregates.
//!
//! The log keeps, for every transmitted frame, its size `s_m` (Mb) and its
//! transmission time `t_m` (s). Laid end to end the durations form a "busy
//! time" axis of length `D = Σ t_m`; frame `m` occupies `[P_m, P_m + t_m)`
//! where `P_m` is the prefix sum of earlier durations, and its megabits are
//! assumed to flow uniformly over that span.
//!
//! A backward window of interval length `τ` holds, for `j = 0, 1, ...`, the
//! megabits moved during `(D − (j+1)τ, D − jτ]`. Entry 0 is the most recent.

use std::io::{self, Write};

// Rounding slack when counting how many intervals fit in the history, so that
// ten frames of 0.1 s hold ten intervals of 0.1 s.
const FIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HistoryError {
    #[error("frame size and duration must be positive (got size={size}, duration={duration})")]
    NonPositive { size: f64, duration: f64 },
    #[error("insufficient history: need {needed} s, have {available} s")]
    Insufficient { needed: f64, available: f64 },
    #[error("interval length must be positive and finite (got {0})")]
    InvalidTau(f64),
    #[error("window needs at least 2 intervals (requested {0})")]
    WindowTooShort(usize),
}

/// Append-only record of frame sizes and transmission durations.
#[derive(Debug, Clone, Default)]
pub struct HistoryLog {
    sizes: Vec<f64>,
    durations: Vec<f64>,
    // starts[m] = Σ_{n<m} t_n, with one extra entry for the total.
    starts: Vec<f64>,
    // size_prefix[m] = Σ_{n<m} s_n, same layout.
    size_prefix: Vec<f64>,
}

impl HistoryLog {
    pub fn new() -> Self {
        Self {
            sizes: Vec::new(),
            durations: Vec::new(),
            starts: vec![0.0],
            size_prefix: vec![0.0],
        }
    }

    /// Builds a log from parallel slices, validating every entry.
    pub fn from_frames(sizes: &[f64], durations: &[f64]) -> Result<Self, HistoryError> {
        let mut log = Self::new();
        for (&s, &t) in sizes.iter().zip(durations) {
            log.append(s, t)?;
        }
        Ok(log)
    }

    pub fn append(&mut self, size: f64, duration: f64) -> Result<(), HistoryError> {
        if !(size > 0.0 && duration > 0.0 && size.is_finite() && duration.is_finite()) {
            return Err(HistoryError::NonPositive { size, duration });
        }
        self.sizes.push(size);
        self.durations.push(duration);
        let t_end = self.total_duration() + duration;
        let s_end = self.total_size() + size;
        self.starts.push(t_end);
        self.size_prefix.push(s_end);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    /// Total logged busy time `Σ t_m`.
    pub fn total_duration(&self) -> f64 {
        *self.starts.last().unwrap_or(&0.0)
    }

    pub fn total_size(&self) -> f64 {
        *self.size_prefix.last().unwrap_or(&0.0)
    }

    /// Megabits moved in the `j`-th backward interval of length `tau`.
    ///
    /// Follows the boundary decomposition of the determination scheme: `U`
    /// is the frame holding the upper edge `D − jτ`, `L` the frame holding
    /// the lower edge; both contribute pro rata and everything strictly
    /// between them contributes in full.
    pub fn aggregate_backward_interval(&self, j: usize, tau: f64) -> Result<f64, HistoryError> {
        check_tau(tau)?;
        let total = self.total_duration();
        let needed = (j as f64 + 1.0) * tau;
        let insufficient = HistoryError::Insufficient {
            needed,
            available: total,
        };
        if self.is_empty() || total + FIT_SLACK * tau < needed {
            return Err(insufficient);
        }
        let frames = self.len();
        let starts = &self.starts[..frames];

        // U = max{u | Σ_{m=u}^{k} t_m ≥ jτ}, i.e. the last frame starting at
        // or before the upper edge.
        let upper = total - j as f64 * tau;
        let u = starts.partition_point(|&p| p <= upper) - 1;
        let res_u = (upper - starts[u]).clamp(0.0, self.durations[u]);
        if res_u >= tau {
            // The whole interval sits inside frame U.
            return Ok(tau / self.durations[u] * self.sizes[u]);
        }

        // L = max{l | Σ_{m=l}^{U-1} t_m ≥ τ − t_Res,U}.
        let lower = (upper - tau).max(0.0);
        let below = starts[..u].partition_point(|&p| p <= lower);
        if below == 0 {
            return Err(insufficient);
        }
        let l = below - 1;
        let between = starts[u] - starts[l + 1];
        let res_l = (tau - res_u - between).clamp(0.0, self.durations[l]);

        let middle = self.size_prefix[u] - self.size_prefix[l + 1];
        Ok(res_u / self.durations[u] * self.sizes[u]
            + res_l / self.durations[l] * self.sizes[l]
            + middle)
    }

    /// The backward window `ŝ` of up to `requested` intervals of length `tau`.
    ///
    /// Fails when fewer than two whole intervals fit in the logged history.
    pub fn build_window(&self, tau: f64, requested: usize) -> Result<BackwardWindow, HistoryError> {
        check_tau(tau)?;
        if requested < 2 {
            return Err(HistoryError::WindowTooShort(requested));
        }
        let total = self.total_duration();
        let fit = (total / tau + FIT_SLACK).floor();
        let count = if fit >= requested as f64 {
            requested
        } else {
            fit as usize
        };
        if count < 2 {
            return Err(HistoryError::Insufficient {
                needed: 2.0 * tau,
                available: total,
            });
        }

        // Walk the interval edges from newest to oldest with a single frame
        // cursor; each edge is evaluated on the cumulative-megabits curve.
        let mut values = Vec::with_capacity(count);
        let mut cursor = self.len() - 1;
        let mut upper_mb = self.total_size();
        for j in 0..count {
            let edge = (total - (j as f64 + 1.0) * tau).max(0.0);
            while cursor > 0 && self.starts[cursor] > edge {
                cursor -= 1;
            }
            let frac = ((edge - self.starts[cursor]) / self.durations[cursor]).clamp(0.0, 1.0);
            let lower_mb = self.size_prefix[cursor] + frac * self.sizes[cursor];
            values.push((upper_mb - lower_mb).max(0.0));
            upper_mb = lower_mb;
        }
        Ok(BackwardWindow {
            tau,
            values,
            requested,
        })
    }
}

fn check_tau(tau: f64) -> Result<(), HistoryError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(HistoryError::InvalidTau(tau))
    }
}

/// Megabits moved in consecutive backward intervals of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardWindow {
    pub tau: f64,
    /// `values[0]` is the most recent interval.
    pub values: Vec<f64>,
    pub requested: usize,
}

impl BackwardWindow {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Debug dump as `j,value_mb` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "j,value_mb")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{j},{v}")?;
        }
        Ok(())
    }
}
