//! Trace-driven simulation of a live-video uploader.
//!
//! The uploader generates frames at a fixed rate and sends them one at a time
//! over a packet-level throughput trace. Before each frame it asks a
//! controller how large the frame may be. The headline controller picks the
//! ε-quantile of an empirical conditional distribution of "megabits the link
//! moved in the next interval, given it moved about this much in the latest
//! one", which keeps the long-run frame-loss rate near ε.
//!
//! Modules, bottom-up:
//! - [`trace`]: packet traces, CSV I/O, synthetic generator.
//! - [`channel`]: finish time of a frame sent over a trace.
//! - [`history`]: frame log and backward interval aggregates.
//! - [`controllers`]: frame-size strategies and the type-7 quantile.
//! - [`streamer`]: the uploader event loop and its metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod controllers;
pub mod history;
pub mod streamer;
pub mod trace;

pub use channel::{transmit, ChannelError, TransmissionResult};
pub use controllers::{
    decide, quantile, ControllerConfig, ControllerError, SizeDecision, SizingContext, Strategy,
    ToleranceMode,
};
pub use history::{BackwardWindow, HistoryError, HistoryLog};
pub use streamer::{
    audit, deadline_check, run, FrameOutcome, FramePolicy, FrameStatus, SimError, SimulationConfig,
    SimulationReport,
};
pub use trace::{generate_trace, load_trace, NetworkTrace, PacketEvent, TraceError, TraceGenSpec};
