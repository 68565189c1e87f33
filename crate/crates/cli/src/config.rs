//! Experiment description and its flat `key = value` config format.
//!
//! ```text
//! # network2, buffer sweep
//! preset = network2
//! seed = 1
//! controllers = min-size, am-5, am-16, am-128, marginal, conditional
//! axis = t_B
//! values = 1/60, 2/60, 3/60, 4/60, 5/60, 6/60
//! s_min = 0.02
//! ```
//!
//! Numbers may be written as fractions (`1/60`). `#` starts a comment.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uplink_core::controllers::{DEFAULT_EPSILON, DEFAULT_LOOKBACK, DEFAULT_S_MIN};
use uplink_core::{
    generate_trace, load_trace, ControllerConfig, FramePolicy, NetworkTrace, SimulationConfig,
    TraceGenSpec,
};

pub const DEFAULT_CONTROLLERS: [&str; 6] = [
    "min-size",
    "am-5",
    "am-16",
    "am-128",
    "marginal",
    "conditional",
];

/// Largest buffer time accepted unless `max_buffer` is raised.
pub const DEFAULT_MAX_BUFFER: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] uplink_core::TraceError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Preset { name: String, seed: u64 },
}

impl TraceSource {
    /// Name used in plot file names: the preset name or the file stem.
    pub fn network_name(&self) -> String {
        match self {
            TraceSource::Preset { name, .. } => name.clone(),
            TraceSource::File(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trace".into()),
        }
    }

    pub fn load(&self) -> Result<NetworkTrace, ConfigError> {
        match self {
            TraceSource::Preset { name, seed } => {
                Ok(generate_trace(&TraceGenSpec::preset(name, *seed)?)?)
            }
            TraceSource::File(path) => {
                let file = File::open(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(load_trace(BufReader::new(file))?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Buffer time `t_B`, seconds.
    Buffer,
    /// Minimal frame size `s_min`, megabits.
    MinSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Buffer => "t_B",
            SweepAxis::MinSize => "s_min",
        }
    }

    /// Axis label with units, for plots.
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Buffer => "t_B (s)",
            SweepAxis::MinSize => "s_min (Mb)",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Buffer => (1..=6).map(|k| k as f64 / 60.0).collect(),
            SweepAxis::MinSize => vec![0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t_B" | "t_b" | "buffer" => Ok(SweepAxis::Buffer),
            "s_min" | "smin" => Ok(SweepAxis::MinSize),
            other => Err(ConfigError::Value {
                key: "axis".into(),
                reason: format!("`{other}` (expected t_B or s_min)"),
            }),
        }
    }
}

/// One sweep: a trace, a set of controllers and the values of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub trace: TraceSource,
    pub controllers: Vec<ControllerConfig>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub fps: f64,
    pub epsilon: f64,
    pub lookback: usize,
    pub training_seconds: f64,
    pub measured_seconds: f64,
    /// `s_min` used when it is not the swept axis.
    pub s_min: f64,
    /// `t_B` used when it is not the swept axis.
    pub buffer: f64,
    pub max_buffer: f64,
    pub policy: FramePolicy,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            trace: TraceSource::Preset {
                name: "network2".into(),
                seed: 1,
            },
            controllers: DEFAULT_CONTROLLERS
                .iter()
                .map(|l| ControllerConfig::from_label(l).expect("built-in label"))
                .collect(),
            axis: SweepAxis::Buffer,
            values: SweepAxis::Buffer.default_values(),
            fps: sim.fps,
            epsilon: DEFAULT_EPSILON,
            lookback: DEFAULT_LOOKBACK,
            training_seconds: sim.training_seconds,
            measured_seconds: sim.measured_seconds,
            s_min: DEFAULT_S_MIN,
            buffer: sim.buffer,
            max_buffer: DEFAULT_MAX_BUFFER,
            policy: sim.policy,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.controllers.is_empty() {
            return bad("no controllers".into());
        }
        if self.values.is_empty() {
            return bad("no axis values".into());
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("axis values must be strictly increasing".into());
        }
        match self.axis {
            SweepAxis::Buffer => {
                if self
                    .values
                    .iter()
                    .any(|&v| !(v >= 0.0 && v <= self.max_buffer))
                {
                    return bad(format!("t_B values must lie in [0, {}]", self.max_buffer));
                }
            }
            SweepAxis::MinSize => {
                if self.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return bad("s_min values must be positive".into());
                }
            }
        }
        for (v, cfg) in self.values.iter().flat_map(|&v| self.cells_for(v)) {
            cfg.validate()
                .map_err(|e| ConfigError::Invalid(format!("{} at {v}: {e}", cfg.label())))?;
        }
        self.simulation(self.values[0])
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Controller configs for one axis value, in table order.
    pub fn cells_for(&self, value: f64) -> impl Iterator<Item = (f64, ControllerConfig)> + '_ {
        self.controllers.iter().map(move |c| {
            let mut cfg = c.clone();
            cfg.epsilon = self.epsilon;
            cfg.lookback = self.lookback;
            cfg.s_min = match self.axis {
                SweepAxis::MinSize => value,
                SweepAxis::Buffer => self.s_min,
            };
            (value, cfg)
        })
    }

    pub fn simulation(&self, value: f64) -> SimulationConfig {
        SimulationConfig {
            buffer: match self.axis {
                SweepAxis::Buffer => value,
                SweepAxis::MinSize => self.buffer,
            },
            fps: self.fps,
            training_seconds: self.training_seconds,
            measured_seconds: self.measured_seconds,
            policy: self.policy,
        }
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_config(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut axis_values_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "values" => axis_values_given = true,
                "axis" if !axis_values_given => {
                    let axis: SweepAxis = value.parse()?;
                    self.values = axis.default_values();
                }
                _ => {}
            }
            self.set(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: i + 1, key },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_config_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut spec = Self::default();
        spec.apply_config(&text)?;
        Ok(spec)
    }

    /// Sets one field from its config key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "trace" => self.trace = TraceSource::File(PathBuf::from(value)),
            "preset" => {
                let seed = match &self.trace {
                    TraceSource::Preset { seed, .. } => *seed,
                    TraceSource::File(_) => 1,
                };
                self.trace = TraceSource::Preset {
                    name: value.to_string(),
                    seed,
                };
            }
            "seed" => {
                let seed = parse_as(key, value)?;
                match &mut self.trace {
                    TraceSource::Preset { seed: s, .. } => *s = seed,
                    TraceSource::File(_) => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            reason: "seed only applies to presets".into(),
                        })
                    }
                }
            }
            "controllers" => {
                self.controllers = split_list(value)
                    .map(|l| {
                        ControllerConfig::from_label(l).map_err(|e| ConfigError::Value {
                            key: key.into(),
                            reason: e.to_string(),
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            "axis" => self.axis = value.parse()?,
            "values" => {
                self.values = split_list(value)
                    .map(|v| parse_number(key, v))
                    .collect::<Result<_, _>>()?;
            }
            "fps" => self.fps = parse_number(key, value)?,
            "epsilon" => self.epsilon = parse_number(key, value)?,
            "lookback" => self.lookback = parse_as(key, value)?,
            "training" => self.training_seconds = parse_number(key, value)?,
            "measured" => self.measured_seconds = parse_number(key, value)?,
            "s_min" => self.s_min = parse_number(key, value)?,
            "t_B" | "buffer" => self.buffer = parse_number(key, value)?,
            "max_buffer" => self.max_buffer = parse_number(key, value)?,
            "policy" => {
                self.policy =
                    value
                        .parse()
                        .map_err(|e: uplink_core::SimError| ConfigError::Value {
                            key: key.into(),
                            reason: e.to_string(),
                        })?
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        reason: format!("`{value}`: {e}"),
    })
}

/// Parses a plain number or a fraction such as `1/60`.
pub fn parse_number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let parsed = match value.split_once('/') {
        Some((n, d)) => {
            let n: f64 = parse_as(key, n.trim())?;
            let d: f64 = parse_as(key, d.trim())?;
            n / d
        }
        None => parse_as(key, value)?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(ConfigError::Value {
            key: key.into(),
            reason: format!("`{value}` is not finite"),
        })
    }
}
