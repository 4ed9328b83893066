//! Scenario files (TOML) and the built-in named scenarios.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackConfig, ObserverGains};
use crate::error::{Error, Result};
use crate::formation::ControllerGains;
use crate::graph::{GraphSpec, NetworkGraph};
use crate::signals::{agent_seeds, moving_targets, split, Reference, SplitOptions, SplitPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Conventional,
    Decomposed,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Mode::Conventional),
            "decomposed" => Ok(Mode::Decomposed),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected conventional or decomposed)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Conventional => "conventional",
            Mode::Decomposed => "decomposed",
        })
    }
}

/// Agent references: a built-in set by name, or one entry per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSet {
    Builtin(String),
    Agents(Vec<Reference>),
}

impl Default for ReferenceSet {
    fn default() -> Self {
        ReferenceSet::Builtin("moving-targets".into())
    }
}

/// Constant planar references used by the static consensus scenarios.
pub const CONSTANT_POINTS: [[f64; 2]; 4] = [[1.0, 2.0], [3.0, -1.0], [-2.0, 0.5], [4.0, 3.0]];

impl ReferenceSet {
    pub fn resolve(&self) -> Result<Vec<Reference>> {
        let refs = match self {
            ReferenceSet::Builtin(name) => match name.as_str() {
                "moving-targets" => moving_targets(),
                "constant-4" => CONSTANT_POINTS
                    .iter()
                    .map(|p| Reference::constant(p))
                    .collect(),
                other => {
                    return Err(Error::Config(format!(
                        "unknown reference set `{other}` (expected moving-targets or constant-4)"
                    )))
                }
            },
            ReferenceSet::Agents(list) => list.clone(),
        };
        for r in &refs {
            r.validate()?;
        }
        Ok(refs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Victim agent, 0-based.
    pub victim: usize,
    pub gains: ObserverGains,
    /// Metrics are taken over `t >= transient_fraction * horizon`.
    pub transient_fraction: f64,
    /// The attack counts as successful when both estimation errors stay
    /// below this over the metric window.
    pub success_threshold: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            victim: 0,
            gains: ObserverGains::default(),
            transient_fraction: 0.75,
            success_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSetup {
    pub position: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    /// Constant offset from the tracked estimate.
    pub bias: [f64; 2],
}

pub fn square_robots() -> Vec<RobotSetup> {
    let positions = [[1.3, 5.2], [-7.5, 2.6], [-4.0, -5.5], [5.2, -5.2]];
    let biases = [[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]];
    positions
        .iter()
        .zip(biases)
        .map(|(&position, bias)| RobotSetup {
            position,
            heading: 0.0,
            bias,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationSection {
    pub gains: ControllerGains,
    pub robots: Vec<RobotSetup>,
    /// Final stretch (seconds) over which tracking errors must be small.
    pub final_window: f64,
    pub error_threshold: f64,
    /// Final stretch (seconds) over which the mean of `W` is taken.
    pub dissipation_window: f64,
    pub dissipation_threshold: f64,
    /// Allowed relative excess of `V` over its analytic envelope.
    pub lyapunov_margin: f64,
    /// Initial stretch (seconds) excluded from the `γ3 > |θ̇_d|` check.
    pub heading_check_skip: f64,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self {
            gains: ControllerGains::default(),
            robots: square_robots(),
            final_window: 5.0,
            error_threshold: 0.05,
            dissipation_window: 10.0,
            dissipation_threshold: 1e-3,
            lyapunov_margin: 0.1,
            heading_check_skip: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// Bound on the final `max_i ‖x_i - avg‖` (broadcast states).
    pub tracking_error: f64,
    /// Bound on `‖Σ(x^α + x^β) - 2Σr‖` over the whole run (decomposed only).
    pub conservation: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            tracking_error: 1.0,
            conservation: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// Agent whose reference is replaced, 0-based.
    pub target: usize,
    /// Neighbour absorbing the change; the lowest-index neighbour if unset.
    pub accomplice: Option<usize>,
    /// `r̄_p - r_p`: initial shift plus the rate of the shift.
    pub shift: Reference,
    pub tolerance: f64,
    /// Also run a world with the target's alpha forcing correction removed.
    pub negative_control: bool,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            target: 0,
            accomplice: None,
            shift: Reference::constant(&[1.0, 0.0]),
            tolerance: 1e-6,
            negative_control: true,
        }
    }
}

fn default_id() -> String {
    "scenario".into()
}
fn default_graph() -> GraphSpec {
    GraphSpec::Preset("cycle(4)".into())
}
fn default_kappa() -> f64 {
    5.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    40.0
}
fn default_stride() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}

/// Everything needed to run one simulation. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_graph")]
    pub graph: GraphSpec,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitOptions,
    #[serde(default)]
    pub references: ReferenceSet,
    #[serde(default)]
    pub checks: ChecksSection,
    pub attack: Option<AttackSection>,
    pub formation: Option<FormationSection>,
    pub audit: Option<AuditSection>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: default_id(),
            graph: default_graph(),
            kappa: default_kappa(),
            mode: Mode::default(),
            dt: default_dt(),
            horizon: default_horizon(),
            sample_stride: default_stride(),
            seed: default_seed(),
            split: SplitOptions::default(),
            references: ReferenceSet::default(),
            checks: ChecksSection::default(),
            attack: None,
            formation: None,
            audit: None,
        }
    }
}

/// Names accepted by [`ScenarioConfig::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 6] = [
    "moving-targets",
    "attack-conventional",
    "attack-decomposed",
    "formation-square",
    "privacy-audit",
    "constant-cycle4",
];

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// A built-in scenario name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(cfg) => Ok(cfg),
            None => Self::from_file(Path::new(name_or_path)),
        }
    }

    /// The built-in scenarios: the four moving targets on `cycle(4)` with
    /// κ = 5, with or without attack, formation or audit layers, plus a
    /// static scenario with constant references and κ = 1.
    pub fn builtin(name: &str) -> Option<Self> {
        let base = Self {
            id: name.to_string(),
            ..Self::default()
        };
        let cfg = match name {
            "moving-targets" => Self {
                mode: Mode::Decomposed,
                ..base
            },
            "attack-conventional" => Self {
                attack: Some(AttackSection::default()),
                ..base
            },
            "attack-decomposed" => Self {
                mode: Mode::Decomposed,
                attack: Some(AttackSection::default()),
                ..base
            },
            "formation-square" => Self {
                mode: Mode::Decomposed,
                horizon: 60.0,
                formation: Some(FormationSection::default()),
                ..base
            },
            "privacy-audit" => Self {
                mode: Mode::Decomposed,
                horizon: 20.0,
                audit: Some(AuditSection::default()),
                ..base
            },
            "constant-cycle4" => Self {
                kappa: 1.0,
                horizon: 20.0,
                references: ReferenceSet::Builtin("constant-4".into()),
                checks: ChecksSection {
                    tracking_error: 1e-4,
                    ..ChecksSection::default()
                },
                ..base
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::Config(format!(
                "horizon must be at least dt, got horizon {} and dt {}",
                self.horizon, self.dt
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Config(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        self.split.validate()?;
        let graph = self.graph.build()?;
        let refs = self.references.resolve()?;
        if refs.len() != graph.n() {
            return Err(Error::Config(format!(
                "{} references for a {}-agent graph",
                refs.len(),
                graph.n()
            )));
        }
        if let Some(f) = &self.formation {
            f.gains.validate()?;
            if f.robots.len() != graph.n() {
                return Err(Error::Config(format!(
                    "{} robots for a {}-agent graph",
                    f.robots.len(),
                    graph.n()
                )));
            }
            if refs.iter().any(|r| r.dim() != 2) {
                return Err(Error::Config(
                    "formation control needs planar references".into(),
                ));
            }
        }
        if self.audit.is_some() && self.mode != Mode::Decomposed {
            return Err(Error::Config(
                "the privacy audit applies to the decomposed protocol".into(),
            ));
        }
        Ok(())
    }

    /// Validates the configuration and expands it into runnable form.
    pub fn resolve(&self) -> Result<Scenario> {
        self.validate()?;
        let graph = self.graph.build()?;
        let references = self.references.resolve()?;
        let m = references[0].dim();
        if references.iter().any(|r| r.dim() != m) {
            return Err(Error::DimensionMismatch(
                "agents have references of different dimension".into(),
            ));
        }
        let splits = match self.mode {
            Mode::Conventional => None,
            Mode::Decomposed => Some(
                references
                    .iter()
                    .zip(agent_seeds(self.seed, references.len()))
                    .map(|(r, s)| split(r, s, &self.split))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let attack = match &self.attack {
            None => None,
            Some(a) => {
                let cfg = AttackConfig {
                    victim: a.victim,
                    gains: a.gains,
                    kappa: self.kappa,
                    graph: graph.clone(),
                };
                cfg.validate()?;
                Some(cfg)
            }
        };
        let formation = self.formation.as_ref().map(|f| FormationSetup {
            gains: f.gains,
            robots: f.robots.clone(),
        });
        Ok(Scenario {
            id: self.id.clone(),
            graph,
            kappa: self.kappa,
            mode: self.mode,
            m,
            dt: self.dt,
            horizon: self.horizon,
            stride: self.sample_stride,
            references,
            splits,
            attack,
            formation,
            alternate: None,
        })
    }

    /// Stable hash of the configuration: SHA-256 of its JSON form with
    /// object keys sorted.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationSetup {
    pub gains: ControllerGains,
    pub robots: Vec<RobotSetup>,
}

/// Which of the four forcing corrections of the alternate world to omit.
/// Used only to show that each one is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokenCondition {
    TargetAlpha,
    TargetBeta,
    AccompliceAlpha,
    AccompliceBeta,
}

/// Forcing changes that turn a decomposed scenario into its alternate
/// world, where the target's reference is `r̄_p = r_p + d` and the
/// accomplice's is `r̄_l = r_l - d`.
///
/// The shift `d` is integrated alongside the plant from `shift.initial`
/// with rate `shift.rate`, and enters the sub-state forcing as
///
/// ```text
/// f̄^α_p = f^α_p - 2κd          f̄^β_p = f^β_p + 2ḋ + 2κd
/// f̄^α_l = f^α_l + 2κd          f̄^β_l = f^β_l - 2ḋ - 2κd
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateForcing {
    pub target: usize,
    pub accomplice: usize,
    pub shift: Reference,
    pub broken: Option<BrokenCondition>,
}

/// A validated, fully expanded scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub graph: NetworkGraph,
    pub kappa: f64,
    pub mode: Mode,
    /// Components per agent.
    pub m: usize,
    pub dt: f64,
    pub horizon: f64,
    pub stride: usize,
    pub references: Vec<Reference>,
    pub splits: Option<Vec<SplitPair>>,
    pub attack: Option<AttackConfig>,
    pub formation: Option<FormationSetup>,
    pub alternate: Option<AlternateForcing>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        for name in BUILTIN_SCENARIOS {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            let sc = cfg.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(sc.n(), 4);
            assert_eq!(sc.m, 2);
        }
        assert!(ScenarioConfig::builtin("nope").is_none());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            id = "demo"
            graph = "path(3)"
            kappa = 2.0
            mode = "decomposed"
            horizon = 5.0
            seed = 9

            [[references]]
            initial = [1.0]
            rate = [[{ kind = "sin", amplitude = 0.5, frequency = 1.0 }]]

            [[references]]
            initial = [2.0]
            rate = [[{ kind = "constant", value = 0.0 }]]

            [[references]]
            initial = [-1.0]
            rate = [[]]

            [attack]
            victim = 1
            gains = { k1 = 4.0, k2 = 4.0, k3 = 4.0, k4 = 4.0 }
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.mode, Mode::Decomposed);
        assert_eq!(cfg.dt, 1e-3);
        let sc = cfg.resolve().unwrap();
        assert_eq!((sc.n(), sc.m), (3, 1));
        assert_eq!(sc.attack.unwrap().victim, 1);
        let back = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&back).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("kapa = 3.0").is_err());
        let typo = "[attack]\ngains = { k1 = 1.0, k5 = 2.0 }";
        assert!(ScenarioConfig::from_toml_str(typo).is_err());
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for text in [
            "dt = 0.0",
            "dt = 0.1\nhorizon = 0.05",
            "sample_stride = 0",
            "graph = { n = 4, edges = [[0, 1], [2, 3]] }",
            "graph = \"cycle(5)\"",
            "references = \"unknown\"",
        ] {
            let err = ScenarioConfig::from_toml_str(text).unwrap_err();
            assert!(err.is_config_error(), "{text}: {err}");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::builtin("attack-conventional").unwrap();
        assert_eq!(a.config_hash(), a.clone().config_hash());
        assert_eq!(a.config_hash().len(), 64);
        let b = ScenarioConfig {
            seed: 2,
            ..a.clone()
        };
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
