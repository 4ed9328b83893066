//! Builds an alternate world where agent 1 holds a shifted reference and its
//! neighbour compensates, then checks that the broadcast trace is the same.
//! A world with one forcing correction removed is run as a control.

use privdac::privacy::{
    beta_offset_residual, build_alternate_shift, simulate_alternate, verify_indistinguishable,
    ObservableTrace,
};
use privdac::signals::{Reference, SignalDescriptor, Term};
use privdac::sim::run_scenario;
use privdac::sim::scenario::{BrokenCondition, ScenarioConfig};

fn main() -> privdac::Result<()> {
    let sc = ScenarioConfig::builtin("privacy-audit")
        .unwrap()
        .resolve()?;
    let original = run_scenario(&sc)?.trace;
    let seen = ObservableTrace::from_trace(&original, &sc)?;

    // Offset (3, -1) at t = 0 whose first component drifts at rate 0.5 sin(0.7t).
    let shift = Reference::new(
        vec![3.0, -1.0],
        SignalDescriptor::new(vec![
            vec![Term::Sin {
                amplitude: 0.5,
                frequency: 0.7,
                phase: 0.0,
            }],
            vec![],
        ])?,
    )?;

    let world = build_alternate_shift(&sc, 0, None, &shift, None)?;
    let (alt, alt_seen) = simulate_alternate(&world)?;
    let verdict = verify_indistinguishable(&seen, &alt_seen, 1e-6)?;
    println!(
        "target agent {}, accomplice agent {}",
        world.target + 1,
        world.accomplice + 1
    );
    println!(
        "r_bar_p(0) = {:?}, r_bar_l(0) = {:?}",
        world.target_reference0, world.accomplice_reference0
    );
    println!(
        "eavesdropper view identical: {} (max deviation {:.2e})",
        verdict.pass, verdict.max_deviation
    );
    println!(
        "hidden beta offset residual: {:.2e}",
        beta_offset_residual(&original, &alt, &world)?
    );

    let broken = build_alternate_shift(&sc, 0, None, &shift, Some(BrokenCondition::TargetAlpha))?;
    let (_, broken_seen) = simulate_alternate(&broken)?;
    let control = verify_indistinguishable(&seen, &broken_seen, 1e-6)?;
    println!(
        "without the target alpha correction: identical = {} (max deviation {:.3})",
        control.pass, control.max_deviation
    );
    Ok(())
}
