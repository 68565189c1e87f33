use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use uplink_core::{
    audit, generate_trace, run, ControllerConfig, FramePolicy, FrameStatus, SimulationConfig,
    Strategy, TraceGenSpec,
};

fn small_spec(seed: u64, mean: f64) -> TraceGenSpec {
    TraceGenSpec {
        duration: 40.0,
        ..TraceGenSpec::with_mean(mean, seed)
    }
}

fn sim(buffer_frames: u32, policy: FramePolicy) -> SimulationConfig {
    SimulationConfig {
        buffer: buffer_frames as f64 / 30.0,
        fps: 30.0,
        training_seconds: 10.0,
        measured_seconds: 25.0,
        policy,
    }
}

fn strategies() -> impl proptest::strategy::Strategy<Value = ControllerConfig> {
    prop_oneof![
        Just(ControllerConfig::new(Strategy::MinSize)),
        (1usize..64).prop_map(ControllerConfig::am),
        Just(ControllerConfig::new(Strategy::MarginalQuantile)),
        Just(ControllerConfig::new(Strategy::ConditionalQuantile)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_run_passes_the_audit(
        seed in 0u64..1000,
        mean in 2.0f64..20.0,
        buffer in 0u32..4,
        fifo in any::<bool>(),
        cfg in strategies(),
        s_min in 0.005f64..0.3,
    ) {
        let policy = if fifo { FramePolicy::DeadlineFifo } else { FramePolicy::NewestFirst };
        let sim = sim(buffer, policy);
        let trace = generate_trace(&small_spec(seed, mean)).unwrap();
        let cfg = cfg.with_s_min(s_min);
        let report = run(&trace, &cfg, &sim).unwrap();
        prop_assert!(audit(&report, &sim).is_ok(), "{:?}", audit(&report, &sim));

        let scored = report.on_time + report.late + report.skipped;
        prop_assert_eq!(scored + report.in_flight, report.generated());
        let sent = report.outcomes.iter().filter(|o| o.is_sent()).count();
        let dropped = report.outcomes.iter().filter(|o| o.status == FrameStatus::Skipped).count();
        prop_assert_eq!(sent + dropped, report.outcomes.len());
        prop_assert!((0.0..=1.0).contains(&report.loss_rate));
    }
}

#[test]
fn runs_are_deterministic() {
    let trace = generate_trace(&small_spec(9, 10.0)).unwrap();
    let cfg = ControllerConfig::new(Strategy::ConditionalQuantile);
    let sim = sim(2, FramePolicy::DeadlineFifo);
    let a = run(&trace, &cfg, &sim).unwrap();
    let b = run(&trace, &cfg, &sim).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_ledger_csv(&mut x).unwrap();
    b.write_ledger_csv(&mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a, b);
}

#[test]
fn frame_count_matches_generation_clock() {
    let trace = generate_trace(&TraceGenSpec::constant(10.0, 0.001, 40.0)).unwrap();
    let sim = sim(1, FramePolicy::DeadlineFifo);
    let report = run(&trace, &ControllerConfig::new(Strategy::MinSize), &sim).unwrap();
    assert_eq!(report.generated(), (25.0 * 30.0) as usize);
    assert_eq!(report.loss_rate, 0.0);
    assert!((report.avg_bitrate - 0.02 * 30.0).abs() < 1e-9);
}

#[test]
fn short_trace_truncates_cleanly() {
    let trace = generate_trace(&TraceGenSpec {
        duration: 20.0,
        ..TraceGenSpec::with_mean(8.0, 2)
    })
    .unwrap();
    let sim = sim(1, FramePolicy::DeadlineFifo);
    let report = run(
        &trace,
        &ControllerConfig::new(Strategy::ConditionalQuantile),
        &sim,
    )
    .unwrap();
    assert!(report.truncated);
    audit(&report, &sim).unwrap();
}
