//! Integration-level numerical checks on whole scenarios.

use privdac::sim::run_scenario;
use privdac::sim::scenario::ScenarioConfig;

fn terminal_poses(dt: f64) -> Vec<f64> {
    let base = ScenarioConfig::builtin("formation-square").unwrap();
    let stride = (0.01 / dt).round() as usize;
    let cfg = ScenarioConfig {
        dt,
        sample_stride: stride,
        ..base
    };
    let robots = cfg.formation.as_ref().unwrap().robots.len();
    let trace = run_scenario(&cfg.resolve().unwrap()).unwrap().trace;
    assert!((trace.times().last().unwrap() - cfg.horizon).abs() < 1e-9);
    (1..=robots)
        .flat_map(|i| ["s_x", "s_y", "theta"].map(|c| format!("{c}_{i}")))
        .map(|name| trace.last(&name).unwrap())
        .collect()
}

#[test]
fn formation_terminal_pose_is_step_converged() {
    let coarse = terminal_poses(1e-3);
    let fine = terminal_poses(5e-4);
    let gap = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(
        gap <= 1e-4,
        "terminal pose moved by {gap:e} when dt was halved"
    );
}

#[test]
fn decomposed_run_conserves_the_reference_sum() {
    let cfg = ScenarioConfig::builtin("moving-targets").unwrap();
    let trace = run_scenario(&cfg.resolve().unwrap()).unwrap().trace;
    let worst = trace
        .channel("conservation")
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "conservation drift {worst:e}");
    for name in trace.columns() {
        assert!(
            trace.channel(name).unwrap().iter().all(|v| v.is_finite()),
            "{name} is not finite"
        );
    }
}
