//! Four unicycle robots hold a square formation around the decomposed
//! consensus estimates and write the full trace to `formation.csv`.

use std::path::Path;

use privdac::sim::run_scenario;
use privdac::sim::scenario::ScenarioConfig;
use privdac::sim::summary::formation_summary;

fn main() -> privdac::Result<()> {
    let cfg = ScenarioConfig::builtin("formation-square").unwrap();
    let section = cfg.formation.clone().unwrap();
    let trace = run_scenario(&cfg.resolve()?)?.trace;

    let last = trace.len() - 1;
    for i in 1..=section.robots.len() {
        println!(
            "robot {i}: pose ({:7.3}, {:7.3}, {:6.3})  errors ({:+.1e}, {:+.1e}, {:+.1e})",
            trace.value(&format!("s_x_{i}"), last)?,
            trace.value(&format!("s_y_{i}"), last)?,
            trace.value(&format!("theta_{i}"), last)?,
            trace.value(&format!("e_x_{i}"), last)?,
            trace.value(&format!("e_y_{i}"), last)?,
            trace.value(&format!("e_theta_{i}"), last)?,
        );
    }
    let m = formation_summary(&trace, &section)?;
    println!("{m:#?}");
    trace.write_csv(Path::new("formation.csv"))?;
    println!(
        "wrote formation.csv ({} samples, {} channels)",
        trace.len(),
        trace.columns().len()
    );
    Ok(())
}
