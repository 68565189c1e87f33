//! Batch front-end for the uplink simulator: experiment configs, parameter
//! sweeps over `t_B` or `s_min`, CSV result tables and SVG charts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod sweep;

pub use config::{ConfigError, ExperimentSpec, SweepAxis, TraceSource};
pub use plot::{plot, PlotError};
pub use sweep::{run_sweep, run_sweep_on, ResultRow, ResultTable, SweepError};
