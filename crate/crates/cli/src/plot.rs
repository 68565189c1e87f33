//! Static SVG line charts of a sweep table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::SweepAxis;
use crate::sweep::{ResultRow, ResultTable};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("nothing to plot: result table is empty")]
    EmptyTable,
    #[error("table mixes sweep axes `{0}` and `{1}`")]
    MixedAxes(String, String),
    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bitrate,
    Loss,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Bitrate => "bitrate",
            Metric::Loss => "loss",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Bitrate => "Mbps",
            Metric::Loss => "loss rate",
        }
    }

    fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::Bitrate => row.avg_bitrate,
            Metric::Loss => row.loss_rate,
        }
    }
}

/// Writes `{network}_{axis}_bitrate.svg` and `{network}_{axis}_loss.svg`
/// into `dir` and returns their paths.
pub fn plot(
    table: &ResultTable,
    network: &str,
    epsilon: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>, PlotError> {
    let first = table.rows.first().ok_or(PlotError::EmptyTable)?;
    if let Some(other) = table.rows.iter().find(|r| r.axis != first.axis) {
        return Err(PlotError::MixedAxes(first.axis.clone(), other.axis.clone()));
    }
    let axis: SweepAxis = first
        .axis
        .parse()
        .map_err(|_| PlotError::UnknownAxis(first.axis.clone()))?;
    let mut written = Vec::new();
    for metric in [Metric::Bitrate, Metric::Loss] {
        let path = dir.join(format!("{network}_{}_{}.svg", axis.name(), metric.name()));
        let reference = (metric == Metric::Loss).then_some(epsilon);
        let svg = render(table, axis, metric, reference);
        std::fs::write(&path, svg).map_err(|source| PlotError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Renders one chart. `reference` draws a dashed horizontal line.
pub fn render(
    table: &ResultTable,
    axis: SweepAxis,
    metric: Metric,
    reference: Option<f64>,
) -> String {
    let xs = table.rows.iter().map(|r| r.value);
    let ys = table.rows.iter().map(|r| metric.of(r)).chain(reference);
    let (x0, x1) = padded_range(xs, false);
    let (y0, y1) = padded_range(ys, metric == Metric::Loss);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // Grid and ticks.
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            TOP + plot_h
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 16.0,
            tick_label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        axis.label()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        metric.label()
    );

    if let Some(r) = reference {
        let y = sy(r);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#555555" stroke-dasharray="6 4"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" fill="#555555">ε = {}</text>"##,
            LEFT + 4.0,
            y - 4.0,
            tick_label(r)
        );
    }

    for (k, name) in table.controllers().into_iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = table
            .series(name)
            .map(|r| format!("{:.2},{:.2}", sx(r.value), sy(metric.of(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        for p in &points {
            let (cx, cy) = p.split_once(',').expect("formatted above");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{colour}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn padded_range(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if include_zero {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        let pad = if hi.abs() > 0.0 { hi.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    if !include_zero || lo < 0.0 {
        lo -= pad;
    }
    hi += pad;
    (lo, hi)
}

/// Roughly five round tick positions inside `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(controller: &str, value: f64, loss: f64, bitrate: f64) -> ResultRow {
        ResultRow {
            controller: controller.into(),
            axis: "t_B".into(),
            value,
            loss_rate: loss,
            avg_bitrate: bitrate,
            late_count: 0,
            skipped_count: 0,
        }
    }

    fn table() -> ResultTable {
        ResultTable {
            rows: vec![
                row("am-16", 1.0 / 60.0, 0.4, 8.0),
                row("conditional", 1.0 / 60.0, 0.05, 7.5),
                row("am-16", 2.0 / 60.0, 0.41, 8.1),
                row("conditional", 2.0 / 60.0, 0.06, 7.9),
            ],
        }
    }

    #[test]
    fn writes_two_named_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = plot(&table(), "network2", 0.05, dir.path()).unwrap();
        let names: Vec<_> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["network2_t_B_bitrate.svg", "network2_t_B_loss.svg"]);
        for p in paths {
            let text = std::fs::read_to_string(p).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn chart_contents() {
        let bitrate = render(&table(), SweepAxis::Buffer, Metric::Bitrate, None);
        assert_eq!(bitrate.matches("<polyline").count(), 2);
        assert!(bitrate.contains(">t_B (s)<"));
        assert!(bitrate.contains(">Mbps<"));
        assert!(bitrate.contains(">am-16<") && bitrate.contains(">conditional<"));
        assert!(!bitrate.contains("stroke-dasharray"));

        let loss = render(&table(), SweepAxis::Buffer, Metric::Loss, Some(0.05));
        assert!(loss.contains("stroke-dasharray"));
        assert!(loss.contains("ε = 0.05"));
    }

    #[test]
    fn empty_table_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            plot(&ResultTable::default(), "n", 0.05, dir.path()),
            Err(PlotError::EmptyTable)
        ));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("no/such/dir");
        assert!(matches!(
            plot(&table(), "n", 0.05, &missing),
            Err(PlotError::Io { .. })
        ));
    }

    #[test]
    fn ticks_are_round() {
        let labels: Vec<_> = ticks(0.0, 1.0).into_iter().map(tick_label).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(tick_label(0.1 + 0.2), "0.3");
        assert_eq!(tick_label(-0.0), "0");
    }
}
