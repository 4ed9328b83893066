//! Constructive indistinguishability audit for the decomposed protocol.
//!
//! An eavesdropper sees the adjacency matrix, κ and every broadcast alpha
//! sub-state. For a target agent `p` and a neighbour `l`, an alternate world
//! in which `p` holds a different reference `r̄_p` (and `l` absorbs the
//! difference so the network average is unchanged) produces exactly the
//! same broadcast trace, provided the sub-state forcing is adjusted as in
//! [`AlternateForcing`]. This module builds that world, simulates it next to
//! the original, and checks that nothing the eavesdropper sees differs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::signals::{Reference, SignalDescriptor, Term};
use crate::sim::engine::run_scenario;
use crate::sim::scenario::{
    AlternateForcing, AuditSection, BrokenCondition, Mode, Scenario, ScenarioConfig,
};
use crate::sim::trace::Trace;

/// Everything available to the eavesdropper: `A`, `κ`, and the broadcast
/// states on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTrace {
    pub kappa: f64,
    pub adjacency: Vec<Vec<u8>>,
    pub n: usize,
    pub m: usize,
    pub times: Vec<f64>,
    /// One `n × m` row-major block per sample.
    pub samples: Vec<Vec<f64>>,
}

impl ObservableTrace {
    /// Extracts the broadcast channels of a simulator trace.
    pub fn from_trace(trace: &Trace, sc: &Scenario) -> Result<Self> {
        let prefix = match sc.mode {
            Mode::Conventional => "x",
            Mode::Decomposed => "x_alpha",
        };
        let (n, m) = (sc.n(), sc.m);
        let mut channels = Vec::with_capacity(n * m);
        for i in 1..=n {
            for d in 0..m {
                channels.push(trace.channel(&format!("{prefix}_{i}_{d}"))?);
            }
        }
        let samples = (0..trace.len())
            .map(|k| channels.iter().map(|c| c[k]).collect())
            .collect();
        Ok(Self {
            kappa: sc.kappa,
            adjacency: sc.graph.adjacency_rows(),
            n,
            m,
            times: trace.times().to_vec(),
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Indistinguishability {
    pub pass: bool,
    /// `max_{t,i} ‖x̄^α_i(t) - x^α_i(t)‖`.
    pub max_deviation: f64,
}

/// Compares two observable traces sample by sample.
pub fn verify_indistinguishable(
    a: &ObservableTrace,
    b: &ObservableTrace,
    tol: f64,
) -> Result<Indistinguishability> {
    if a.adjacency != b.adjacency || a.kappa != b.kappa || a.m != b.m {
        return Err(Error::TopologyMismatch);
    }
    if a.times != b.times {
        return Err(Error::GridMismatch(format!(
            "{} vs {} samples",
            a.times.len(),
            b.times.len()
        )));
    }
    let mut worst = 0.0f64;
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        for (xa, xb) in sa.chunks(a.m).zip(sb.chunks(b.m)) {
            let dev = xa
                .iter()
                .zip(xb)
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dev);
        }
    }
    Ok(Indistinguishability {
        pass: worst <= tol,
        max_deviation: worst,
    })
}

/// The alternate world for target `p` and accomplice `l`, with the derived
/// initial values spelled out.
#[derive(Debug, Clone)]
pub struct AlternateWorld {
    pub target: usize,
    pub accomplice: usize,
    /// `r̄_p(0)`.
    pub target_reference0: Vec<f64>,
    /// `r̄_l(0) = r_l(0) + r_p(0) - r̄_p(0)`.
    pub accomplice_reference0: Vec<f64>,
    /// `r̄^α_p(0) = r^α_p(0)` and `r̄^β_p(0) = 2r̄_p(0) - r^α_p(0)`.
    pub target_split0: (Vec<f64>, Vec<f64>),
    /// `r̄^α_l(0) = r^α_l(0)` and `r̄^β_l(0) = 2r̄_l(0) - r^α_l(0)`.
    pub accomplice_split0: (Vec<f64>, Vec<f64>),
    /// The barred scenario, ready to simulate.
    pub scenario: Scenario,
}

impl AlternateWorld {
    pub fn shift(&self) -> &Reference {
        &self
            .scenario
            .alternate
            .as_ref()
            .expect("alternate scenario")
            .shift
    }
}

/// Alternate world in which agent `p` holds `r̄_p` (given by its initial
/// value and rate). `accomplice` defaults to the lowest-index neighbour.
pub fn build_alternate(
    original: &Scenario,
    target: usize,
    accomplice: Option<usize>,
    r_bar_p: &Reference,
) -> Result<AlternateWorld> {
    let r_p = original
        .references
        .get(target)
        .ok_or_else(|| Error::Config(format!("target {target} is outside the network")))?;
    r_bar_p.validate()?;
    if r_bar_p.dim() != r_p.dim() {
        return Err(Error::DimensionMismatch(
            "alternate reference has the wrong dimension".into(),
        ));
    }
    let initial = r_bar_p
        .initial
        .iter()
        .zip(&r_p.initial)
        .map(|(a, b)| a - b)
        .collect();
    let rate = if r_bar_p.rate == r_p.rate {
        SignalDescriptor::zero(r_p.dim())
    } else {
        r_bar_p.rate.minus(&r_p.rate)?
    };
    build_alternate_shift(
        original,
        target,
        accomplice,
        &Reference { initial, rate },
        None,
    )
}

/// Alternate world given directly by the shift `d = r̄_p - r_p`.
/// `broken` drops one forcing correction (negative control).
pub fn build_alternate_shift(
    original: &Scenario,
    target: usize,
    accomplice: Option<usize>,
    shift: &Reference,
    broken: Option<BrokenCondition>,
) -> Result<AlternateWorld> {
    if original.mode != Mode::Decomposed {
        return Err(Error::Config(
            "the alternate world is defined for the decomposed protocol".into(),
        ));
    }
    if original.alternate.is_some() {
        return Err(Error::Config(
            "scenario is already an alternate world".into(),
        ));
    }
    let n = original.n();
    if target >= n {
        return Err(Error::Config(format!(
            "target {target} is outside the network"
        )));
    }
    let accomplice = match accomplice {
        Some(l) => l,
        None => original
            .graph
            .neighbors(target)
            .next()
            .ok_or(Error::NotNeighbor {
                p: target,
                l: target,
            })?,
    };
    if accomplice >= n || original.graph.a(target, accomplice) == 0.0 {
        return Err(Error::NotNeighbor {
            p: target,
            l: accomplice,
        });
    }
    shift.validate()?;
    if !shift.rate.is_bounded() {
        return Err(Error::UnboundedSignal("alternate reference rate".into()));
    }
    if shift.dim() != original.m {
        return Err(Error::DimensionMismatch(
            "shift has the wrong dimension".into(),
        ));
    }
    let splits = original
        .splits
        .as_ref()
        .expect("decomposed scenario has splits");
    let d0 = &shift.initial;
    let r_p0: Vec<f64> = original.references[target]
        .initial
        .iter()
        .zip(d0)
        .map(|(r, d)| r + d)
        .collect();
    let r_l0: Vec<f64> = original.references[accomplice]
        .initial
        .iter()
        .zip(d0)
        .map(|(r, d)| r - d)
        .collect();
    let split0 = |agent: usize, r0: &[f64]| {
        let alpha = splits[agent].alpha0.clone();
        let beta = r0.iter().zip(&alpha).map(|(r, a)| 2.0 * r - a).collect();
        (alpha, beta)
    };
    let target_split0 = split0(target, &r_p0);
    let accomplice_split0 = split0(accomplice, &r_l0);

    let mut scenario = original.clone();
    scenario.id = format!("{}-alternate", original.id);
    scenario.alternate = Some(AlternateForcing {
        target,
        accomplice,
        shift: shift.clone(),
        broken,
    });
    Ok(AlternateWorld {
        target,
        accomplice,
        target_reference0: r_p0,
        accomplice_reference0: r_l0,
        target_split0,
        accomplice_split0,
        scenario,
    })
}

/// Integrates the barred dynamics; returns the full trace and what the
/// eavesdropper would see.
pub fn simulate_alternate(world: &AlternateWorld) -> Result<(Trace, ObservableTrace)> {
    let trace = run_scenario(&world.scenario)?.trace;
    let observable = ObservableTrace::from_trace(&trace, &world.scenario)?;
    Ok((trace, observable))
}

/// Largest violation over the grid of the hidden-state identities
/// `x̄^β_p - x^β_p = 2(r̄_p - r_p)` and `x̄^β_l - x^β_l = -2(r̄_p - r_p)`.
pub fn beta_offset_residual(
    original: &Trace,
    alternate: &Trace,
    world: &AlternateWorld,
) -> Result<f64> {
    if original.times() != alternate.times() {
        return Err(Error::GridMismatch("original and alternate traces".into()));
    }
    let (p, l) = (world.target + 1, world.accomplice + 1);
    let m = world.scenario.m;
    let mut worst = 0.0f64;
    for d in 0..m {
        let diff = |tr_a: &Trace, tr_b: &Trace, name: &str| -> Result<Vec<f64>> {
            let a = tr_a.channel(name)?;
            let b = tr_b.channel(name)?;
            Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
        };
        let shift = diff(alternate, original, &format!("r_{p}_{d}"))?;
        let beta_p = diff(alternate, original, &format!("x_beta_{p}_{d}"))?;
        let beta_l = diff(alternate, original, &format!("x_beta_{l}_{d}"))?;
        for k in 0..shift.len() {
            worst = worst.max((beta_p[k] - 2.0 * shift[k]).abs());
            worst = worst.max((beta_l[k] + 2.0 * shift[k]).abs());
        }
    }
    Ok(worst)
}

/// Random bounded shift: a constant offset in `[-magnitude, magnitude]` per
/// component plus a sinusoidal drift whose amplitude is at most a tenth of
/// `magnitude` and frequency lies in `[0.1, 1]`.
pub fn random_shift(rng: &mut SplitMix64, m: usize, magnitude: f64) -> Reference {
    let initial = (0..m).map(|_| rng.uniform(-magnitude, magnitude)).collect();
    let components = (0..m)
        .map(|_| {
            let amplitude = rng.uniform(-0.1 * magnitude, 0.1 * magnitude);
            let frequency = rng.uniform(0.1, 1.0);
            vec![Term::Cos {
                amplitude,
                frequency,
                phase: 0.0,
            }]
        })
        .collect();
    Reference::new(
        initial,
        SignalDescriptor::new(components).expect("finite terms"),
    )
    .expect("consistent dimensions")
}

/// Outcome of a full audit of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub target: usize,
    pub accomplice: usize,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub beta_offset_residual: f64,
    /// Deviation of the broadcast trace up to `t = 5` when the target's
    /// alpha correction is dropped; expected to be large.
    pub negative_control_deviation: Option<f64>,
}

/// Horizon over which the negative control must already have diverged.
pub const NEGATIVE_CONTROL_TIME: f64 = 5.0;
/// Minimum negative-control deviation for the construction to count as tight.
pub const NEGATIVE_CONTROL_MIN: f64 = 1e-2;

/// Runs the original world, the alternate world and (optionally) a broken
/// world, and reports whether the eavesdropper can tell them apart.
pub fn run_audit(cfg: &ScenarioConfig) -> Result<AuditReport> {
    let section = cfg.audit.clone().unwrap_or_default();
    let original = cfg.resolve()?;
    audit_scenario(&original, &section)
}

pub fn audit_scenario(original: &Scenario, section: &AuditSection) -> Result<AuditReport> {
    let world = build_alternate_shift(
        original,
        section.target,
        section.accomplice,
        &section.shift,
        None,
    )?;
    let broken = if section.negative_control {
        let mut short = original.clone();
        short.horizon = short.horizon.min(NEGATIVE_CONTROL_TIME);
        Some(build_alternate_shift(
            &short,
            section.target,
            section.accomplice,
            &section.shift,
            Some(BrokenCondition::TargetAlpha),
        )?)
    } else {
        None
    };

    let (base, (alt, neg)) = rayon::join(
        || run_scenario(original).map(|o| o.trace),
        || {
            rayon::join(
                || simulate_alternate(&world),
                || broken.as_ref().map(simulate_alternate).transpose(),
            )
        },
    );
    let base = base?;
    let (alt_trace, alt_obs) = alt?;
    let base_obs = ObservableTrace::from_trace(&base, original)?;
    let verdict = verify_indistinguishable(&base_obs, &alt_obs, section.tolerance)?;
    let residual = beta_offset_residual(&base, &alt_trace, &world)?;

    let negative_control_deviation = match neg? {
        None => None,
        Some((_, neg_obs)) => {
            let k = neg_obs.times.len();
            let truncated = ObservableTrace {
                times: base_obs.times[..k].to_vec(),
                samples: base_obs.samples[..k].to_vec(),
                ..base_obs.clone()
            };
            Some(verify_indistinguishable(&truncated, &neg_obs, section.tolerance)?.max_deviation)
        }
    };
    let negative_ok = negative_control_deviation.is_none_or(|d| d > NEGATIVE_CONTROL_MIN);
    Ok(AuditReport {
        pass: verdict.pass && residual <= section.tolerance && negative_ok,
        target: world.target,
        accomplice: world.accomplice,
        tolerance: section.tolerance,
        max_deviation: verdict.max_deviation,
        beta_offset_residual: residual,
        negative_control_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::moving_targets;
    use approx::assert_abs_diff_eq;

    fn short_audit_scenario() -> Scenario {
        let cfg = ScenarioConfig {
            horizon: 2.0,
            ..ScenarioConfig::builtin("privacy-audit").unwrap()
        };
        cfg.resolve().unwrap()
    }

    #[test]
    fn identity_alternate_is_bit_identical() {
        let sc = short_audit_scenario();
        let r_p = sc.references[0].clone();
        let world = build_alternate(&sc, 0, None, &r_p).unwrap();
        assert_eq!(world.accomplice, 1);
        assert_eq!(world.target_reference0, r_p.initial);
        let (alt, alt_obs) = simulate_alternate(&world).unwrap();
        let base = run_scenario(&sc).unwrap().trace;
        let base_obs = ObservableTrace::from_trace(&base, &sc).unwrap();
        assert_eq!(alt_obs, base_obs);
        for name in base.columns() {
            assert_eq!(
                alt.channel(name).unwrap(),
                base.channel(name).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn accomplice_absorbs_the_shift() {
        let sc = short_audit_scenario();
        let targets = moving_targets();
        let mut r_bar = targets[0].clone();
        r_bar.initial[0] += 1.0;
        let world = build_alternate(&sc, 0, Some(3), &r_bar).unwrap();
        assert_abs_diff_eq!(
            world.accomplice_reference0[0],
            targets[3].initial[0] - 1.0,
            epsilon = 1e-12
        );
        assert_eq!(world.accomplice_reference0[1], targets[3].initial[1]);
        let total: f64 = world.target_reference0[0] + world.accomplice_reference0[0];
        assert_abs_diff_eq!(
            total,
            targets[0].initial[0] + targets[3].initial[0],
            epsilon = 1e-12
        );
        let (alpha, beta) = &world.target_split0;
        for d in 0..2 {
            assert!((alpha[d] + beta[d] - 2.0 * world.target_reference0[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn construction_errors() {
        let sc = short_audit_scenario();
        let shift = Reference::constant(&[1.0, 0.0]);
        assert!(matches!(
            build_alternate_shift(&sc, 0, Some(2), &shift, None),
            Err(Error::NotNeighbor { p: 0, l: 2 })
        ));
        let ramp = Reference {
            initial: vec![0.0, 0.0],
            rate: SignalDescriptor::new(vec![vec![Term::Linear { slope: 1.0 }], vec![]]).unwrap(),
        };
        assert!(matches!(
            build_alternate_shift(&sc, 0, None, &ramp, None),
            Err(Error::UnboundedSignal(_))
        ));
        let conv = ScenarioConfig::builtin("moving-targets").map(|c| ScenarioConfig {
            mode: Mode::Conventional,
            ..c
        });
        assert!(
            build_alternate_shift(&conv.unwrap().resolve().unwrap(), 0, None, &shift, None)
                .is_err()
        );
    }

    #[test]
    fn grid_and_topology_mismatch() {
        let sc = short_audit_scenario();
        let base = ObservableTrace::from_trace(&run_scenario(&sc).unwrap().trace, &sc).unwrap();
        let same = verify_indistinguishable(&base, &base, 1e-6).unwrap();
        assert!(same.pass);
        assert_eq!(same.max_deviation, 0.0);
        let mut other = base.clone();
        other.kappa = 1.0;
        assert!(matches!(
            verify_indistinguishable(&base, &other, 1e-6),
            Err(Error::TopologyMismatch)
        ));
        let mut other = base.clone();
        other.times.pop();
        assert!(matches!(
            verify_indistinguishable(&base, &other, 1e-6),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn each_correction_is_needed() {
        let mut sc = short_audit_scenario();
        sc.horizon = 1.0;
        let base = ObservableTrace::from_trace(&run_scenario(&sc).unwrap().trace, &sc).unwrap();
        let shift = Reference::constant(&[1.0, 0.0]);
        for broken in [
            BrokenCondition::TargetAlpha,
            BrokenCondition::TargetBeta,
            BrokenCondition::AccompliceAlpha,
            BrokenCondition::AccompliceBeta,
        ] {
            let world = build_alternate_shift(&sc, 0, None, &shift, Some(broken)).unwrap();
            let (_, obs) = simulate_alternate(&world).unwrap();
            let v = verify_indistinguishable(&base, &obs, 1e-6).unwrap();
            assert!(!v.pass, "{broken:?} deviation {}", v.max_deviation);
        }
    }
}
