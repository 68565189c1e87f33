//! Frame-size controllers.
//!
//! Every controller answers the same question: given the buffer time left,
//! the time until the next frame is generated and the frame history, how many
//! megabits should the next frame carry? The deadline budget for a frame is
//! `τ = α·t_b + T`.
//!
//! * `min-size` always sends `s_min`.
//! * `am` predicts the throughput as the time-weighted mean over the last `K`
//!   frames and fills the budget at that rate.
//! * `marginal-quantile` takes the ε-quantile of the megabits moved in past
//!   intervals of length `τ`.
//! * `conditional-quantile` restricts that sample to the successors of past
//!   intervals that looked like the most recent one, then takes the
//!   ε-quantile.

use std::fmt;
use std::str::FromStr;

use crate::history::{BackwardWindow, HistoryLog};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_LOOKBACK: usize = 2000;
pub const DEFAULT_AM_WINDOW: usize = 16;
pub const DEFAULT_S_MIN: f64 = 0.02;
pub const DEFAULT_COND_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("quantile of an empty sample")]
    EmptySample,
    #[error("quantile level {0} outside [0, 1]")]
    BadLevel(f64),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("unknown controller `{0}`")]
    UnknownController(String),
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7): position `(n − 1)·γ` in the sorted sample.
pub fn quantile(values: &[f64], gamma: f64) -> Result<f64, ControllerError> {
    if values.is_empty() {
        return Err(ControllerError::EmptySample);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ControllerError::BadLevel(gamma));
    }
    let mut scratch = values.to_vec();
    Ok(quantile_in_place(&mut scratch, gamma))
}

/// Same as [`quantile`] but reorders `values` instead of copying it.
pub(crate) fn quantile_in_place(values: &mut [f64], gamma: f64) -> f64 {
    let n = values.len();
    let pos = (n - 1) as f64 * gamma;
    let lo = (pos.floor() as usize).min(n - 1);
    let frac = pos - lo as f64;
    let (_, &mut a, right) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || right.is_empty() {
        return a;
    }
    let b = right.iter().copied().fold(f64::INFINITY, f64::min);
    a + (b - a) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    MinSize,
    Am,
    MarginalQuantile,
    ConditionalQuantile,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::MinSize => "min-size",
            Strategy::Am => "am",
            Strategy::MarginalQuantile => "marginal-quantile",
            Strategy::ConditionalQuantile => "conditional-quantile",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-size" | "min" => Ok(Strategy::MinSize),
            "am" => Ok(Strategy::Am),
            "marginal-quantile" | "marginal" => Ok(Strategy::MarginalQuantile),
            "conditional-quantile" | "conditional" => Ok(Strategy::ConditionalQuantile),
            other => Err(ControllerError::UnknownController(other.to_string())),
        }
    }
}

/// How "approximately equal to the latest interval" is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToleranceMode {
    /// `|ŝ[n] − ŝ[0]| ≤ tol·ŝ[0]`
    Relative,
    /// `|ŝ[n] − ŝ[0]| ≤ tol` megabits
    Absolute,
}

impl FromStr for ToleranceMode {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relative" => Ok(ToleranceMode::Relative),
            "absolute" => Ok(ToleranceMode::Absolute),
            other => Err(ControllerError::InvalidConfig(format!(
                "tolerance mode `{other}` (expected relative or absolute)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub strategy: Strategy,
    /// Target loss probability ε.
    pub epsilon: f64,
    /// Number of backward intervals `J`.
    pub lookback: usize,
    /// Frames averaged by the AM predictor, `K`.
    pub am_window: usize,
    /// Conservatism factor applied to the buffer time.
    pub alpha: f64,
    /// Minimal frame size, megabits.
    pub s_min: f64,
    pub cond_tolerance: f64,
    pub tolerance_mode: ToleranceMode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ConditionalQuantile,
            epsilon: DEFAULT_EPSILON,
            lookback: DEFAULT_LOOKBACK,
            am_window: DEFAULT_AM_WINDOW,
            alpha: 1.0,
            s_min: DEFAULT_S_MIN,
            cond_tolerance: DEFAULT_COND_TOLERANCE,
            tolerance_mode: ToleranceMode::Relative,
        }
    }
}

impl ControllerConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn am(window: usize) -> Self {
        Self {
            strategy: Strategy::Am,
            am_window: window,
            ..Self::default()
        }
    }

    pub fn with_s_min(mut self, s_min: f64) -> Self {
        self.s_min = s_min;
        self
    }

    /// Parses a controller label: `min-size`, `am-<K>`, `marginal`,
    /// `conditional` (or the long strategy names).
    pub fn from_label(label: &str) -> Result<Self, ControllerError> {
        if let Some(k) = label.strip_prefix("am-") {
            let k: usize = k
                .parse()
                .map_err(|_| ControllerError::UnknownController(label.to_string()))?;
            return Ok(Self::am(k));
        }
        label.parse().map(Self::new)
    }

    /// Short label used in tables and plot legends.
    pub fn label(&self) -> String {
        match self.strategy {
            Strategy::MinSize => "min-size".into(),
            Strategy::Am => format!("am-{}", self.am_window),
            Strategy::MarginalQuantile => "marginal".into(),
            Strategy::ConditionalQuantile => "conditional".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: &str| Err(ControllerError::InvalidConfig(msg.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.s_min > 0.0 && self.s_min.is_finite()) {
            return bad("s_min must be positive");
        }
        if self.lookback < 2 {
            return bad("lookback J must be at least 2");
        }
        if self.am_window < 1 {
            return bad("AM window K must be at least 1");
        }
        if !(self.cond_tolerance > 0.0) {
            return bad("conditioning tolerance must be positive");
        }
        Ok(())
    }
}

/// What a controller sees when sizing frame `i`.
#[derive(Debug, Clone, Copy)]
pub struct SizingContext<'a> {
    /// Buffer time left, `t_b`.
    pub buffer: f64,
    /// Time until the next frame is generated, `T = [t_g(i+1) − t_s(i)]⁺`.
    pub time_to_next: f64,
    pub history: &'a HistoryLog,
    pub fps: f64,
}

impl SizingContext<'_> {
    /// The deadline budget `α·t_b + T`.
    pub fn budget(&self, alpha: f64) -> f64 {
        alpha * self.buffer + self.time_to_next
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDecision {
    pub size: f64,
    /// Set when history was too short or the conditioning set was empty.
    pub fallback_used: bool,
    pub window_len: usize,
    pub conditioning_len: usize,
}

impl SizeDecision {
    fn fixed(size: f64, fallback_used: bool) -> Self {
        Self {
            size,
            fallback_used,
            window_len: 0,
            conditioning_len: 0,
        }
    }
}

/// Unweighted mean of the last `k` throughputs.
pub fn arithmetic_mean_rate(history: &HistoryLog, k: usize) -> Option<f64> {
    let n = history.len();
    let k = k.min(n);
    if k == 0 {
        return None;
    }
    let rates = history.sizes()[n - k..]
        .iter()
        .zip(&history.durations()[n - k..])
        .map(|(s, t)| s / t);
    Some(rates.sum::<f64>() / k as f64)
}

/// Time-weighted mean of the last `k` throughputs, `Σ C·t / Σ t`.
pub fn time_weighted_mean_rate(history: &HistoryLog, k: usize) -> Option<f64> {
    let n = history.len();
    let k = k.min(n);
    if k == 0 {
        return None;
    }
    let sizes = &history.sizes()[n - k..];
    let durations = &history.durations()[n - k..];
    let weighted: f64 = sizes.iter().zip(durations).map(|(s, t)| (s / t) * t).sum();
    let total: f64 = durations.iter().sum();
    Some(weighted / total)
}

/// AM sizing: fill the budget at the time-weighted mean rate.
pub fn am_size(ctx: &SizingContext<'_>, cfg: &ControllerConfig) -> SizeDecision {
    match time_weighted_mean_rate(ctx.history, cfg.am_window) {
        Some(rate) => SizeDecision {
            size: (rate * ctx.budget(cfg.alpha)).max(cfg.s_min),
            fallback_used: false,
            window_len: cfg.am_window.min(ctx.history.len()),
            conditioning_len: 0,
        },
        None => SizeDecision::fixed(cfg.s_min, true),
    }
}

fn window_for(ctx: &SizingContext<'_>, cfg: &ControllerConfig) -> Option<BackwardWindow> {
    let tau = ctx.budget(cfg.alpha);
    ctx.history.build_window(tau, cfg.lookback).ok()
}

/// ε-quantile of the whole backward window.
pub fn marginal_quantile_size(ctx: &SizingContext<'_>, cfg: &ControllerConfig) -> SizeDecision {
    let Some(mut window) = window_for(ctx, cfg) else {
        return SizeDecision::fixed(cfg.s_min, true);
    };
    let window_len = window.len();
    let q = quantile_in_place(&mut window.values, cfg.epsilon);
    SizeDecision {
        size: q.max(cfg.s_min),
        fallback_used: false,
        window_len,
        conditioning_len: 0,
    }
}

/// Successors-in-time of the window entries close to the latest one:
/// `{ ŝ[n−1] : 1 ≤ n < len, ŝ[n] ≈ ŝ[0] }`.
pub fn conditioning_set(window: &[f64], tolerance: f64, mode: ToleranceMode) -> Vec<f64> {
    let Some(&latest) = window.first() else {
        return Vec::new();
    };
    let radius = match mode {
        ToleranceMode::Relative if latest > 0.0 => tolerance * latest,
        _ => tolerance,
    };
    window
        .windows(2)
        .filter(|pair| (pair[1] - latest).abs() <= radius)
        .map(|pair| pair[0])
        .collect()
}

/// ε-quantile of the conditional relative frequency given the latest interval.
pub fn conditional_quantile_size(ctx: &SizingContext<'_>, cfg: &ControllerConfig) -> SizeDecision {
    let Some(mut window) = window_for(ctx, cfg) else {
        return SizeDecision::fixed(cfg.s_min, true);
    };
    let window_len = window.len();
    let mut matched = conditioning_set(&window.values, cfg.cond_tolerance, cfg.tolerance_mode);
    if matched.is_empty() {
        let q = quantile_in_place(&mut window.values[1..], cfg.epsilon);
        return SizeDecision {
            size: q.max(cfg.s_min),
            fallback_used: true,
            window_len,
            conditioning_len: 0,
        };
    }
    let q = quantile_in_place(&mut matched, cfg.epsilon);
    SizeDecision {
        size: q.max(cfg.s_min),
        fallback_used: false,
        window_len,
        conditioning_len: matched.len(),
    }
}

/// Dispatches to the configured strategy.
pub fn decide(cfg: &ControllerConfig, ctx: &SizingContext<'_>) -> SizeDecision {
    if !(ctx.budget(cfg.alpha) > 0.0) && cfg.strategy != Strategy::MinSize {
        return SizeDecision::fixed(cfg.s_min, true);
    }
    match cfg.strategy {
        Strategy::MinSize => SizeDecision::fixed(cfg.s_min, false),
        Strategy::Am => am_size(ctx, cfg),
        Strategy::MarginalQuantile => marginal_quantile_size(ctx, cfg),
        Strategy::ConditionalQuantile => conditional_quantile_size(ctx, cfg),
    }
}
