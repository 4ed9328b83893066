//! Couples every enabled layer into one flat state vector and integrates it
//! with fixed-step RK4.
//!
//! Flat state layout, in order:
//!
//! | block      | length          | contents                                   |
//! |------------|-----------------|--------------------------------------------|
//! | consensus  | `n·m` or `2n·m` | `x`, or `x^α` followed by `x^β`            |
//! | observer   | `4m`            | `x̂, r̂, f̂', z` (attack only)                |
//! | robots     | `4n`            | `s_x, s_y, θ, ϖ` per robot (formation only) |
//! | references | `n·m`           | `r_i`, integrated from `f_i`               |
//! | shift      | `m`             | `d = r̄_p - r_p` (alternate world only)     |
//!
//! Trace channels name agents and robots from 1 and vector components
//! from 0, e.g. `x_alpha_1_0` is the first component of agent 1's alpha
//! sub-state.

use std::ops::Range;

use crate::adversary::observer_rhs_into;
use crate::consensus::{agent_mean, conventional_rhs_into, decomposed_rhs_into};
use crate::error::{Error, Result};
use crate::formation::{robot_rhs, FormationAux, RobotEval, RobotPose};
use crate::sim::integrator::Rk4;
use crate::sim::scenario::{AlternateForcing, BrokenCondition, Mode, Scenario, ScenarioConfig};
use crate::sim::trace::Trace;

/// Offsets of each block inside the flat state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub consensus: Range<usize>,
    pub observer: Option<Range<usize>>,
    pub robots: Option<Range<usize>>,
    pub references: Range<usize>,
    pub shift: Option<Range<usize>>,
    pub len: usize,
}

impl StateLayout {
    pub fn for_scenario(sc: &Scenario) -> Self {
        let (n, m) = (sc.n(), sc.m);
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let consensus = take(match sc.mode {
            Mode::Conventional => n * m,
            Mode::Decomposed => 2 * n * m,
        });
        let observer = sc.attack.as_ref().map(|_| take(4 * m));
        let robots = sc.formation.as_ref().map(|f| take(4 * f.robots.len()));
        let references = take(n * m);
        let shift = sc.alternate.as_ref().map(|_| take(m));
        Self {
            consensus,
            observer,
            robots,
            references,
            shift,
            len: at,
        }
    }
}

/// Scratch buffers reused by every right-hand-side evaluation.
struct Scratch {
    f: Vec<f64>,
    f_alpha: Vec<f64>,
    f_beta: Vec<f64>,
    shift_rate: Vec<f64>,
    robots: Vec<RobotEval>,
}

struct System<'a> {
    sc: &'a Scenario,
    layout: StateLayout,
}

impl<'a> System<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        if sc.mode == Mode::Decomposed && sc.splits.as_ref().map(Vec::len) != Some(sc.n()) {
            return Err(Error::Config(
                "decomposed scenario needs one split per agent".into(),
            ));
        }
        if let Some(alt) = &sc.alternate {
            if sc.mode != Mode::Decomposed {
                return Err(Error::Config(
                    "alternate worlds apply to the decomposed protocol".into(),
                ));
            }
            if alt.target >= sc.n() || alt.accomplice >= sc.n() || alt.shift.dim() != sc.m {
                return Err(Error::Config(
                    "alternate world does not fit the scenario".into(),
                ));
            }
        }
        Ok(Self {
            sc,
            layout: StateLayout::for_scenario(sc),
        })
    }

    fn scratch(&self) -> Scratch {
        let nm = self.sc.n() * self.sc.m;
        Scratch {
            f: vec![0.0; nm],
            f_alpha: vec![0.0; nm],
            f_beta: vec![0.0; nm],
            shift_rate: vec![0.0; self.sc.m],
            robots: Vec::new(),
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        let sc = self.sc;
        let (n, m) = (sc.n(), sc.m);
        let mut y = vec![0.0; self.layout.len];
        let refs = &mut y[self.layout.references.clone()];
        for (i, r) in sc.references.iter().enumerate() {
            refs[i * m..(i + 1) * m].copy_from_slice(&r.initial);
        }
        let cons = &mut y[self.layout.consensus.clone()];
        match (&sc.mode, &sc.splits) {
            (Mode::Decomposed, Some(splits)) => {
                for (i, s) in splits.iter().enumerate() {
                    cons[i * m..(i + 1) * m].copy_from_slice(&s.alpha0);
                    cons[(n + i) * m..(n + i + 1) * m].copy_from_slice(&s.beta0);
                }
            }
            _ => {
                for (i, r) in sc.references.iter().enumerate() {
                    cons[i * m..(i + 1) * m].copy_from_slice(&r.initial);
                }
            }
        }
        if let (Some(range), Some(f)) = (&self.layout.robots, &sc.formation) {
            let block = &mut y[range.clone()];
            for (i, robot) in f.robots.iter().enumerate() {
                block[4 * i..4 * i + 4].copy_from_slice(&[
                    robot.position[0],
                    robot.position[1],
                    robot.heading,
                    1.0,
                ]);
            }
        }
        if let (Some(alt), Some(range)) = (&sc.alternate, &self.layout.shift) {
            let d0 = &alt.shift.initial;
            let (p, l) = (alt.target, alt.accomplice);
            for k in 0..m {
                y[self.layout.references.start + p * m + k] += d0[k];
                y[self.layout.references.start + l * m + k] -= d0[k];
                y[self.layout.consensus.start + (n + p) * m + k] += 2.0 * d0[k];
                y[self.layout.consensus.start + (n + l) * m + k] -= 2.0 * d0[k];
            }
            y[range.clone()].copy_from_slice(d0);
        }
        y
    }

    /// Length of the broadcast block (the one an eavesdropper sees).
    fn broadcast_len(&self) -> usize {
        self.sc.n() * self.sc.m
    }

    fn rhs(
        &self,
        t: f64,
        y: &[f64],
        out: &mut [f64],
        theta_refs: &[Option<f64>],
        scratch: &mut Scratch,
        keep_robots: bool,
    ) -> Result<()> {
        let sc = self.sc;
        let (n, m) = (sc.n(), sc.m);
        let lay = &self.layout;

        for (i, r) in sc.references.iter().enumerate() {
            r.rate.value_into(t, &mut scratch.f[i * m..(i + 1) * m]);
        }
        let alt = sc.alternate.as_ref();
        if let (Some(alt), Some(range)) = (alt, &lay.shift) {
            alt.shift.rate.value_into(t, &mut scratch.shift_rate);
            out[range.clone()].copy_from_slice(&scratch.shift_rate);
            for k in 0..m {
                scratch.f[alt.target * m + k] += scratch.shift_rate[k];
                scratch.f[alt.accomplice * m + k] -= scratch.shift_rate[k];
            }
        }
        out[lay.references.clone()].copy_from_slice(&scratch.f);

        let (cons_out, rest_out) = out.split_at_mut(lay.consensus.end);
        let cons = &y[lay.consensus.clone()];
        match sc.mode {
            Mode::Conventional => {
                conventional_rhs_into(cons, &scratch.f, &sc.graph, sc.kappa, m, cons_out);
            }
            Mode::Decomposed => {
                let splits = sc.splits.as_ref().expect("checked in System::new");
                for (i, s) in splits.iter().enumerate() {
                    s.alpha
                        .value_into(t, &mut scratch.f_alpha[i * m..(i + 1) * m]);
                    s.beta
                        .value_into(t, &mut scratch.f_beta[i * m..(i + 1) * m]);
                }
                if let (Some(alt), Some(range)) = (alt, &lay.shift) {
                    apply_alternate(alt, &y[range.clone()], sc.kappa, m, scratch);
                }
                let (alpha, beta) = cons.split_at(n * m);
                let (da, db) = cons_out.split_at_mut(n * m);
                decomposed_rhs_into(
                    alpha,
                    beta,
                    &scratch.f_alpha,
                    &scratch.f_beta,
                    &sc.graph,
                    sc.kappa,
                    m,
                    da,
                    db,
                );
            }
        }

        let broadcast = &cons[..self.broadcast_len()];
        let broadcast_rate = &cons_out[..self.broadcast_len()];
        let offset = lay.consensus.end;
        if let (Some(cfg), Some(range)) = (&sc.attack, &lay.observer) {
            observer_rhs_into(
                &y[range.clone()],
                broadcast,
                cfg,
                m,
                &mut rest_out[range.start - offset..range.end - offset],
            );
        }

        scratch.robots.clear();
        if let (Some(f), Some(range)) = (&sc.formation, &lay.robots) {
            let block = &y[range.clone()];
            let dblock = &mut rest_out[range.start - offset..range.end - offset];
            for (i, robot) in f.robots.iter().enumerate() {
                let s = &block[4 * i..4 * i + 4];
                let pose = RobotPose {
                    s_x: s[0],
                    s_y: s[1],
                    theta: s[2],
                };
                let aux = FormationAux {
                    varpi: s[3],
                    bias: robot.bias,
                };
                let c = [broadcast[2 * i], broadcast[2 * i + 1]];
                let c_dot = [broadcast_rate[2 * i], broadcast_rate[2 * i + 1]];
                let eval = robot_rhs(t, &pose, &aux, c, c_dot, theta_refs[i], &f.gains)?;
                dblock[4 * i..4 * i + 3].copy_from_slice(&eval.pose_dot);
                dblock[4 * i + 3] = eval.varpi_dot;
                if keep_robots {
                    scratch.robots.push(eval);
                }
            }
        }
        Ok(())
    }
}

fn apply_alternate(alt: &AlternateForcing, d: &[f64], kappa: f64, m: usize, scratch: &mut Scratch) {
    let (p, l) = (alt.target, alt.accomplice);
    let keep = |c: BrokenCondition| alt.broken != Some(c);
    for (k, dk) in d.iter().enumerate().take(m) {
        let coupling = 2.0 * kappa * dk;
        let rate = 2.0 * scratch.shift_rate[k];
        if keep(BrokenCondition::TargetAlpha) {
            scratch.f_alpha[p * m + k] -= coupling;
        }
        if keep(BrokenCondition::TargetBeta) {
            scratch.f_beta[p * m + k] += rate + coupling;
        }
        if keep(BrokenCondition::AccompliceAlpha) {
            scratch.f_alpha[l * m + k] += coupling;
        }
        if keep(BrokenCondition::AccompliceBeta) {
            scratch.f_beta[l * m + k] -= rate + coupling;
        }
    }
}

/// Channel names, in trace column order.
pub fn channel_names(sc: &Scenario) -> Vec<String> {
    let (n, m) = (sc.n(), sc.m);
    let mut cols = Vec::new();
    let block = |cols: &mut Vec<String>, prefix: &str| {
        for i in 1..=n {
            for d in 0..m {
                cols.push(format!("{prefix}_{i}_{d}"));
            }
        }
    };
    match sc.mode {
        Mode::Conventional => block(&mut cols, "x"),
        Mode::Decomposed => {
            block(&mut cols, "x_alpha");
            block(&mut cols, "x_beta");
        }
    }
    block(&mut cols, "r");
    cols.extend((0..m).map(|d| format!("avg_{d}")));
    cols.extend((1..=n).map(|i| format!("err_{i}")));
    cols.push("disagreement".into());
    if sc.mode == Mode::Decomposed {
        cols.push("conservation".into());
    }
    if sc.attack.is_some() {
        for name in ["xhat", "rhat", "fhat", "z", "r_true", "f_true"] {
            cols.extend((0..m).map(|d| format!("{name}_{d}")));
        }
        cols.push("rtilde_norm".into());
        cols.push("ftilde_norm".into());
    }
    if let Some(f) = &sc.formation {
        for i in 1..=f.robots.len() {
            for name in ROBOT_CHANNELS {
                cols.push(format!("{name}_{i}"));
            }
        }
    }
    if sc.alternate.is_some() {
        cols.extend((0..m).map(|d| format!("shift_{d}")));
    }
    cols
}

/// Per-robot channels, suffixed with the 1-based robot index.
pub const ROBOT_CHANNELS: [&str; 15] = [
    "s_x",
    "s_y",
    "theta",
    "theta_d",
    "v_d",
    "e_x",
    "e_y",
    "e_theta",
    "e_theta_bar",
    "rho",
    "varpi",
    "V",
    "W",
    "v",
    "omega",
];

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

impl System<'_> {
    fn sample_row(&self, y: &[f64], scratch: &Scratch, row: &mut Vec<f64>) {
        let sc = self.sc;
        let (n, m) = (sc.n(), sc.m);
        let lay = &self.layout;
        row.clear();
        let cons = &y[lay.consensus.clone()];
        let refs = &y[lay.references.clone()];
        row.extend_from_slice(cons);
        row.extend_from_slice(refs);
        let avg = agent_mean(refs, m);
        row.extend_from_slice(&avg);
        let broadcast = &cons[..n * m];
        for i in 0..n {
            row.push(norm((0..m).map(|d| broadcast[i * m + d] - avg[d])));
        }
        // Distance of the whole consensus stack from the consensus subspace.
        let rows = cons.len() / m;
        let mean = agent_mean(cons, m);
        row.push(norm(
            (0..rows)
                .flat_map(|i| (0..m).map(move |d| (i, d)))
                .map(|(i, d)| cons[i * m + d] - mean[d]),
        ));
        if sc.mode == Mode::Decomposed {
            row.push(norm((0..m).map(|d| {
                let sub: f64 = (0..2 * n).map(|i| cons[i * m + d]).sum();
                let r: f64 = (0..n).map(|i| refs[i * m + d]).sum();
                sub - 2.0 * r
            })));
        }
        if let (Some(cfg), Some(range)) = (&sc.attack, &lay.observer) {
            let obs = &y[range.clone()];
            let v = cfg.victim;
            let x = &broadcast[v * m..(v + 1) * m];
            let r_true = &refs[v * m..(v + 1) * m];
            let f_true = &scratch.f[v * m..(v + 1) * m];
            let f_hat: Vec<f64> = (0..m)
                .map(|d| cfg.gains.k3 * x[d] + obs[2 * m + d])
                .collect();
            row.extend_from_slice(&obs[..m]);
            row.extend_from_slice(&obs[m..2 * m]);
            row.extend_from_slice(&f_hat);
            row.extend_from_slice(&obs[3 * m..]);
            row.extend_from_slice(r_true);
            row.extend_from_slice(f_true);
            row.push(norm((0..m).map(|d| r_true[d] - obs[m + d])));
            row.push(norm((0..m).map(|d| f_true[d] - f_hat[d])));
        }
        if let Some(range) = &lay.robots {
            let block = &y[range.clone()];
            for (i, e) in scratch.robots.iter().enumerate() {
                let s = &block[4 * i..4 * i + 4];
                row.extend_from_slice(&[
                    s[0],
                    s[1],
                    s[2],
                    e.theta_d,
                    e.v_d,
                    e.errors.e_x,
                    e.errors.e_y,
                    e.errors.e_theta,
                    e.errors.e_theta_bar,
                    e.errors.rho,
                    s[3],
                    e.lyapunov,
                    e.dissipation,
                    e.v,
                    e.omega,
                ]);
            }
        }
        if let Some(range) = &lay.shift {
            row.extend_from_slice(&y[range.clone()]);
        }
    }
}

/// Result of a run: the sampled trace and the state at the final time.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub final_state: Vec<f64>,
    pub layout: StateLayout,
}

/// Integrates a resolved scenario over `[0, horizon]`, sampling every
/// `stride` steps and at the final step.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    let system = System::new(sc)?;
    let mut scratch = system.scratch();
    let mut y = system.initial_state();
    let mut dy = vec![0.0; y.len()];
    let mut rk = Rk4::new(y.len());
    let mut trace = Trace::new(channel_names(sc));
    let mut row = Vec::with_capacity(trace.columns().len());

    let n_robots = sc.formation.as_ref().map_or(0, |f| f.robots.len());
    let mut theta_refs: Vec<Option<f64>> = vec![None; n_robots];

    // Evaluating at the accepted state both feeds the sampler and fixes the
    // heading branch that the next step unwraps against.
    let mut observe =
        |t: f64, y: &[f64], theta_refs: &mut [Option<f64>], scratch: &mut Scratch| -> Result<()> {
            system.rhs(t, y, &mut dy, theta_refs, scratch, true)?;
            for (r, e) in theta_refs.iter_mut().zip(&scratch.robots) {
                *r = Some(e.theta_d);
            }
            Ok(())
        };

    observe(0.0, &y, &mut theta_refs, &mut scratch)?;
    system.sample_row(&y, &scratch, &mut row);
    trace.push(0.0, &row)?;

    let steps = sc.steps();
    for k in 0..steps {
        let t = k as f64 * sc.dt;
        {
            let refs = &theta_refs;
            let scr = &mut scratch;
            rk.step(
                |t, y, out| system.rhs(t, y, out, refs, scr, false),
                t,
                &mut y,
                sc.dt,
            )?;
        }
        let t_next = (k + 1) as f64 * sc.dt;
        let record = (k + 1) % sc.stride == 0 || k + 1 == steps;
        if n_robots > 0 || record {
            observe(t_next, &y, &mut theta_refs, &mut scratch)?;
        }
        if record {
            system.sample_row(&y, &scratch, &mut row);
            trace.push(t_next, &row)?;
        }
    }
    Ok(RunOutput {
        trace,
        final_state: y,
        layout: system.layout,
    })
}

/// Validates, resolves and runs a scenario configuration.
pub fn run(cfg: &ScenarioConfig) -> Result<Trace> {
    Ok(run_scenario(&cfg.resolve()?)?.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Reference;
    use crate::sim::scenario::ReferenceSet;
    use approx::assert_abs_diff_eq;

    fn constant_cfg(mode: Mode) -> ScenarioConfig {
        ScenarioConfig {
            mode,
            ..ScenarioConfig::builtin("constant-cycle4").unwrap()
        }
    }

    #[test]
    fn layout_offsets() {
        let sc = ScenarioConfig::builtin("formation-square")
            .unwrap()
            .resolve()
            .unwrap();
        let lay = StateLayout::for_scenario(&sc);
        assert_eq!(lay.consensus, 0..16);
        assert_eq!(lay.observer, None);
        assert_eq!(lay.robots, Some(16..32));
        assert_eq!(lay.references, 32..40);
        assert_eq!(lay.len, 40);
        let sc = ScenarioConfig::builtin("attack-conventional")
            .unwrap()
            .resolve()
            .unwrap();
        let lay = StateLayout::for_scenario(&sc);
        assert_eq!(
            (lay.consensus, lay.observer, lay.references),
            (0..8, Some(8..16), 16..24)
        );
    }

    #[test]
    fn conventional_constant_references_converge() {
        let trace = run(&constant_cfg(Mode::Conventional)).unwrap();
        for i in 1..=4 {
            assert!(trace.last(&format!("err_{i}")).unwrap() <= 1e-4);
        }
        assert_abs_diff_eq!(trace.last("avg_0").unwrap(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(trace.last("x_1_1").unwrap(), 1.125, epsilon = 1e-4);
    }

    #[test]
    fn decomposed_conserves_sum() {
        let cfg = ScenarioConfig {
            horizon: 5.0,
            ..ScenarioConfig::builtin("moving-targets").unwrap()
        };
        let trace = run(&cfg).unwrap();
        let worst = trace
            .channel("conservation")
            .unwrap()
            .into_iter()
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "conservation drift {worst}");
    }

    #[test]
    fn deterministic_csv() {
        let cfg = ScenarioConfig {
            horizon: 1.0,
            ..ScenarioConfig::builtin("attack-decomposed").unwrap()
        };
        assert_eq!(run(&cfg).unwrap().to_csv(), run(&cfg).unwrap().to_csv());
    }

    #[test]
    fn sampling_grid() {
        let cfg = ScenarioConfig {
            horizon: 0.105,
            sample_stride: 10,
            ..constant_cfg(Mode::Conventional)
        };
        let trace = run(&cfg).unwrap();
        // 0, 0.01, ..., 0.1 and the final step at 0.105.
        assert_eq!(trace.len(), 12);
        assert_abs_diff_eq!(*trace.times().last().unwrap(), 0.105, epsilon = 1e-12);
    }

    #[test]
    fn single_agent_tracks_itself() {
        let cfg = ScenarioConfig {
            graph: crate::graph::GraphSpec::Edges {
                n: 1,
                edges: vec![],
            },
            references: ReferenceSet::Agents(vec![Reference::constant(&[2.5])]),
            horizon: 1.0,
            ..ScenarioConfig::default()
        };
        let trace = run(&cfg).unwrap();
        assert_eq!(trace.last("x_1_0").unwrap(), 2.5);
        assert_eq!(trace.last("err_1").unwrap(), 0.0);
    }

    #[test]
    fn formation_trace_has_robot_channels() {
        let cfg = ScenarioConfig {
            horizon: 0.5,
            ..ScenarioConfig::builtin("formation-square").unwrap()
        };
        let trace = run(&cfg).unwrap();
        for name in ROBOT_CHANNELS {
            assert!(trace.has_channel(&format!("{name}_4")), "{name}");
        }
        assert_eq!(trace.value("varpi_1", 0).unwrap(), 1.0);
        assert_eq!(trace.value("s_x_2", 0).unwrap(), -7.5);
    }
}
