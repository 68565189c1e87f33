//! Parameter sweeps: one simulation per (controller, axis value) cell.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uplink_core::{audit, run, NetworkTrace, SimError};

use crate::config::{ConfigError, ExperimentSpec};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{controller} at {axis}={value}: {source}")]
    Cell {
        controller: String,
        axis: String,
        value: f64,
        source: SimError,
    },
    #[error("{controller} at {axis}={value}: invariant violated: {reason}")]
    Audit {
        controller: String,
        axis: String,
        value: f64,
        reason: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub controller: String,
    pub axis: String,
    pub value: f64,
    pub loss_rate: f64,
    pub avg_bitrate: f64,
    pub late_count: usize,
    pub skipped_count: usize,
}

/// Rows in (axis value, controller) order as listed in the experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, SweepError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SweepError> {
        let rows = csv::Reader::from_reader(input)
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Controllers in first-appearance order.
    pub fn controllers(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.controller.as_str()) {
                seen.push(&row.controller);
            }
        }
        seen
    }

    pub fn series<'a>(&'a self, controller: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.controller == controller)
    }
}

/// Loads or generates the trace, then runs every cell.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<ResultTable, SweepError> {
    spec.validate()?;
    let trace = spec.trace.load()?;
    run_sweep_on(spec, &trace)
}

/// Runs every cell of `spec` on an already loaded trace. Cells execute in
/// parallel; the table order does not depend on scheduling. Each run is
/// audited for the simulator invariants.
pub fn run_sweep_on(
    spec: &ExperimentSpec,
    trace: &NetworkTrace,
) -> Result<ResultTable, SweepError> {
    spec.validate()?;
    let cells: Vec<_> = spec
        .values
        .iter()
        .flat_map(|&v| spec.cells_for(v))
        .collect();
    let axis = spec.axis.name();
    let rows = cells
        .par_iter()
        .map(|(value, cfg)| {
            let sim = spec.simulation(*value);
            let controller = cfg.label();
            let report = run(trace, cfg, &sim).map_err(|source| SweepError::Cell {
                controller: controller.clone(),
                axis: axis.into(),
                value: *value,
                source,
            })?;
            audit(&report, &sim).map_err(|reason| SweepError::Audit {
                controller: controller.clone(),
                axis: axis.into(),
                value: *value,
                reason,
            })?;
            Ok(ResultRow {
                controller,
                axis: axis.into(),
                value: *value,
                loss_rate: report.loss_rate,
                avg_bitrate: report.avg_bitrate,
                late_count: report.late,
                skipped_count: report.skipped,
            })
        })
        .collect::<Result<Vec<_>, SweepError>>()?;
    Ok(ResultTable { rows })
}
