//! An eavesdropper who knows the topology and κ and hears every broadcast
//! runs an observer on agent 1. Against the conventional protocol it
//! recovers the private reference; against the decomposed protocol the
//! estimate stays off by roughly the hidden alpha/beta offset.

use privdac::adversary::attack_metrics;
use privdac::sim::run_scenario;
use privdac::sim::scenario::ScenarioConfig;

fn main() -> privdac::Result<()> {
    for name in ["attack-conventional", "attack-decomposed"] {
        let cfg = ScenarioConfig::builtin(name).unwrap();
        let trace = run_scenario(&cfg.resolve()?)?.trace;
        let m = attack_metrics(&trace, 0.75)?;
        let last = trace.len() - 1;
        println!("{name}");
        println!(
            "  true r_1(T)      = ({:.4}, {:.4})",
            trace.value("r_true_0", last)?,
            trace.value("r_true_1", last)?
        );
        println!(
            "  estimated r_1(T) = ({:.4}, {:.4})",
            trace.value("rhat_0", last)?,
            trace.value("rhat_1", last)?
        );
        println!(
            "  last quarter: |r~| in [{:.4}, {:.4}], sup |f~| = {:.4}\n",
            m.min_error_r, m.sup_error_r, m.sup_error_f
        );
    }
    Ok(())
}
