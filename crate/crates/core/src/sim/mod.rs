//! Deterministic fixed-step simulation of the coupled consensus, attack and
//! formation layers.

pub mod engine;
pub mod integrator;
pub mod scenario;
pub mod summary;
pub mod trace;

pub use engine::{run, run_scenario, RunOutput, StateLayout};
pub use integrator::{rk4_step, Rk4};
pub use scenario::{Mode, Scenario, ScenarioConfig};
pub use trace::Trace;
