use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use uplink_cli::config::parse_number;
use uplink_cli::{plot, run_sweep, ExperimentSpec, ResultTable, TraceSource};
use uplink_core::{audit, generate_trace, run, ControllerConfig, TraceGenSpec};

#[derive(Parser)]
#[command(
    name = "uplink",
    version,
    about = "Trace-driven live-video uplink simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic packet trace and write it as CSV.
    GenTrace(GenTraceArgs),
    /// Run one controller over one trace and print its metrics.
    Simulate(SimulateArgs),
    /// Sweep t_B or s_min across controllers and write a CSV table.
    Sweep(SweepArgs),
    /// Draw bitrate and loss-rate charts from a sweep table.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    /// network1 (about 12 Mbps) or network2 (about 8 Mbps).
    #[arg(long, default_value = "network1")]
    preset: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the mean rate (Mbps); state rates scale with it.
    #[arg(long)]
    mean_rate: Option<f64>,
    /// Trace length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Mean dwell time of a rate state, seconds.
    #[arg(long)]
    dwell: Option<f64>,
    /// Packet size, megabits.
    #[arg(long)]
    packet_size: Option<f64>,
    /// Output CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    /// Packet trace CSV (`timestamp_seconds,payload_bytes`).
    #[arg(long, conflicts_with = "preset")]
    trace: Option<PathBuf>,
    /// Synthetic preset used when no trace file is given.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: TraceArgs,
    /// min-size, am-<K>, marginal or conditional.
    #[arg(long, default_value = "conditional")]
    controller: String,
    /// Buffer time t_B in seconds; fractions such as 2/60 are accepted.
    #[arg(long, default_value = "1/60")]
    buffer: String,
    #[arg(long, default_value = "0.02")]
    s_min: String,
    #[arg(long, default_value = "60")]
    fps: String,
    #[arg(long, default_value = "0.05")]
    epsilon: String,
    /// Backward window length J.
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long, default_value = "120")]
    training: String,
    #[arg(long, default_value = "300")]
    measured: String,
    /// fifo (default) or newest.
    #[arg(long, default_value = "fifo")]
    policy: String,
    /// Write the per-frame ledger to this CSV file.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` experiment file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: TraceArgs,
    /// Comma-separated controller labels.
    #[arg(long)]
    controllers: Option<String>,
    /// t_B or s_min.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated, strictly increasing axis values.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    fps: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lookback: Option<String>,
    #[arg(long)]
    training: Option<String>,
    #[arg(long)]
    measured: Option<String>,
    /// s_min when sweeping t_B.
    #[arg(long)]
    s_min: Option<String>,
    /// t_B when sweeping s_min.
    #[arg(long)]
    buffer: Option<String>,
    #[arg(long)]
    max_buffer: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the two SVG charts into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep table written by `uplink sweep`.
    #[arg(long)]
    table: PathBuf,
    /// Network name for the file names (defaults to the table's file stem).
    #[arg(long)]
    network: Option<String>,
    /// Loss target drawn as a reference line.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenTrace(args) => gen_trace(args),
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Plot(args) => plot_table(args),
    }
}

fn gen_trace(args: GenTraceArgs) -> Result<()> {
    let mut spec = TraceGenSpec::preset(&args.preset, args.seed)?;
    if let Some(mean) = args.mean_rate {
        spec = TraceGenSpec {
            duration: spec.duration,
            ..TraceGenSpec::with_mean(mean, args.seed)
        };
    }
    if let Some(d) = args.duration {
        spec.duration = d;
    }
    if let Some(d) = args.dwell {
        spec.transition_dwell_mean = d;
    }
    if let Some(p) = args.packet_size {
        spec.packet_size = p;
    }
    let trace = generate_trace(&spec)?;
    let out = create(&args.output)?;
    trace
        .save(out)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "wrote {} packets, {:.3} Mbps mean over {} s, to {}",
        trace.len(),
        trace.mean_rate(),
        trace.duration(),
        args.output.display()
    );
    Ok(())
}

fn trace_source(args: &TraceArgs, spec: &mut ExperimentSpec) -> Result<()> {
    if let Some(path) = &args.trace {
        if args.seed.is_some() {
            bail!("--seed only applies to presets");
        }
        spec.trace = TraceSource::File(path.clone());
    }
    if let Some(name) = &args.preset {
        spec.set("preset", name)?;
    }
    if let Some(seed) = args.seed {
        spec.set("seed", &seed.to_string())?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = ExperimentSpec::default();
    trace_source(&args.source, &mut spec)?;
    let mut cfg = ControllerConfig::from_label(&args.controller)?;
    cfg.epsilon = parse_number("epsilon", &args.epsilon)?;
    cfg.s_min = parse_number("s_min", &args.s_min)?;
    if let Some(j) = args.lookback {
        cfg.lookback = j;
    }
    cfg.validate()?;
    spec.fps = parse_number("fps", &args.fps)?;
    spec.training_seconds = parse_number("training", &args.training)?;
    spec.measured_seconds = parse_number("measured", &args.measured)?;
    spec.set("policy", &args.policy)?;
    let sim = spec.simulation(parse_number("buffer", &args.buffer)?);
    sim.validate()?;

    let trace = spec.trace.load()?;
    let report = run(&trace, &cfg, &sim)?;
    if let Err(reason) = audit(&report, &sim) {
        bail!("simulator invariant violated: {reason}");
    }
    if let Some(path) = &args.ledger {
        report
            .write_ledger_csv(create(path)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = io::stdout().lock();
    writeln!(out, "controller   {}", cfg.label())?;
    writeln!(out, "t_B          {}", sim.buffer)?;
    writeln!(out, "loss_rate    {:.6}", report.loss_rate)?;
    writeln!(out, "avg_bitrate  {:.6} Mbps", report.avg_bitrate)?;
    writeln!(out, "on_time      {}", report.on_time)?;
    writeln!(out, "late         {}", report.late)?;
    writeln!(out, "skipped      {}", report.skipped)?;
    writeln!(out, "fallbacks    {}", report.fallbacks)?;
    if report.truncated {
        writeln!(out, "note         trace ended before the measured span")?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_config_file(path)?,
        None => ExperimentSpec::default(),
    };
    trace_source(&args.source, &mut spec)?;
    // The axis goes first so that an explicit --values survives it.
    if let Some(axis) = &args.axis {
        spec.apply_config(&format!("axis = {axis}"))?;
    }
    let overrides = [
        ("controllers", &args.controllers),
        ("values", &args.values),
        ("fps", &args.fps),
        ("epsilon", &args.epsilon),
        ("lookback", &args.lookback),
        ("training", &args.training),
        ("measured", &args.measured),
        ("s_min", &args.s_min),
        ("buffer", &args.buffer),
        ("max_buffer", &args.max_buffer),
        ("policy", &args.policy),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }

    let table = run_sweep(&spec)?;
    match &args.output {
        Some(path) => table.write_csv(create(path)?)?,
        None => table.write_csv(io::stdout().lock())?,
    }
    if let Some(dir) = &args.plots {
        let network = spec.trace.network_name();
        for path in plot(&table, &network, spec.epsilon, dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn plot_table(args: PlotArgs) -> Result<()> {
    let file =
        File::open(&args.table).with_context(|| format!("opening {}", args.table.display()))?;
    let table = ResultTable::read_csv(file)?;
    let network = match args.network {
        Some(n) => n,
        None => args
            .table
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into()),
    };
    for path in plot(&table, &network, args.epsilon, &args.out_dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}
