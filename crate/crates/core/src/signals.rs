//! Closed-form time signals with exact derivatives, the moving-target
//! references used by the built-in scenarios, and the alpha/beta split that
//! hides a reference behind two sub-signals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Which trigonometric projection a [`Term::Rotating`] contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Cos,
    Sin,
}

/// One additive term of a signal component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Constant {
        value: f64,
    },
    Linear {
        slope: f64,
    },
    Cos {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `scale * (magnitude + magnitude_swing*cos(magnitude_freq*t))
    ///        * trig(heading + heading_swing*sin(heading_freq*t))`
    ///
    /// A speed that breathes times one projection of a heading that wobbles.
    /// Two of these (one per axis) make a planar velocity.
    Rotating {
        axis: Axis,
        #[serde(default = "one")]
        scale: f64,
        magnitude: f64,
        magnitude_swing: f64,
        magnitude_freq: f64,
        heading: f64,
        heading_swing: f64,
        heading_freq: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Term {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { value } => value,
            Term::Linear { slope } => slope * t,
            Term::Cos {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).cos(),
            Term::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Term::Rotating {
                axis,
                scale,
                magnitude,
                magnitude_swing,
                magnitude_freq,
                heading,
                heading_swing,
                heading_freq,
            } => {
                let mag = magnitude + magnitude_swing * (magnitude_freq * t).cos();
                let ang = heading + heading_swing * (heading_freq * t).sin();
                let proj = match axis {
                    Axis::Cos => ang.cos(),
                    Axis::Sin => ang.sin(),
                };
                scale * mag * proj
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { .. } => 0.0,
            Term::Linear { slope } => slope,
            Term::Cos {
                amplitude,
                frequency,
                phase,
            } => -amplitude * frequency * (frequency * t + phase).sin(),
            Term::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * frequency * (frequency * t + phase).cos(),
            Term::Rotating {
                axis,
                scale,
                magnitude,
                magnitude_swing,
                magnitude_freq,
                heading,
                heading_swing,
                heading_freq,
            } => {
                let mag = magnitude + magnitude_swing * (magnitude_freq * t).cos();
                let mag_dot = -magnitude_swing * magnitude_freq * (magnitude_freq * t).sin();
                let ang = heading + heading_swing * (heading_freq * t).sin();
                let ang_dot = heading_swing * heading_freq * (heading_freq * t).cos();
                let (proj, proj_dot) = match axis {
                    Axis::Cos => (ang.cos(), -ang.sin() * ang_dot),
                    Axis::Sin => (ang.sin(), ang.cos() * ang_dot),
                };
                scale * (mag_dot * proj + mag * proj_dot)
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Term::Constant { value } => value.is_finite(),
            Term::Linear { slope } => slope.is_finite(),
            Term::Cos {
                amplitude,
                frequency,
                phase,
            }
            | Term::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
            Term::Rotating {
                scale,
                magnitude,
                magnitude_swing,
                magnitude_freq,
                heading,
                heading_swing,
                heading_freq,
                ..
            } => [
                scale,
                magnitude,
                magnitude_swing,
                magnitude_freq,
                heading,
                heading_swing,
                heading_freq,
            ]
            .iter()
            .all(|v| v.is_finite()),
        }
    }

    fn negated(&self) -> Term {
        let mut t = self.clone();
        match &mut t {
            Term::Constant { value } => *value = -*value,
            Term::Linear { slope } => *slope = -*slope,
            Term::Cos { amplitude, .. } | Term::Sin { amplitude, .. } => *amplitude = -*amplitude,
            Term::Rotating { scale, .. } => *scale = -*scale,
        }
        t
    }
}

/// A vector-valued signal; component `d` is the sum of `components[d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalDescriptor {
    components: Vec<Vec<Term>>,
}

impl SignalDescriptor {
    pub fn new(components: Vec<Vec<Term>>) -> Result<Self> {
        let desc = Self { components };
        desc.validate()?;
        Ok(desc)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            components: vec![Vec::new(); dim],
        }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            components: values
                .iter()
                .map(|&value| vec![Term::Constant { value }])
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("signal needs at least one component".into()));
        }
        if !self.components.iter().flatten().all(Term::is_finite) {
            return Err(Error::Config("signal has a non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<Term>] {
        &self.components
    }

    /// No linear terms, so both value and derivative stay bounded for all t.
    pub fn is_bounded(&self) -> bool {
        !self
            .components
            .iter()
            .flatten()
            .any(|t| matches!(t, Term::Linear { .. }))
    }

    /// `(value(t), derivative(t))`, both exact.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.dim()];
        let mut d = vec![0.0; self.dim()];
        self.value_into(t, &mut v);
        self.derivative_into(t, &mut d);
        (v, d)
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            *o = terms.iter().fold(0.0, |acc, term| acc + term.value(t));
        }
    }

    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            *o = terms.iter().fold(0.0, |acc, term| acc + term.derivative(t));
        }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.value_into(t, &mut v);
        v
    }

    /// Component-wise sum, terms of `self` first.
    pub fn plus(&self, other: &SignalDescriptor) -> Result<SignalDescriptor> {
        self.check_dim(other)?;
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().chain(b).cloned().collect())
                .collect(),
        })
    }

    /// Component-wise `self - other`, terms of `self` first.
    pub fn minus(&self, other: &SignalDescriptor) -> Result<SignalDescriptor> {
        self.plus(&other.negated())
    }

    pub fn negated(&self) -> SignalDescriptor {
        Self {
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(Term::negated).collect())
                .collect(),
        }
    }

    fn check_dim(&self, other: &SignalDescriptor) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "signal dimensions {} and {} differ",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// A private reference `r(t) = initial + ∫₀ᵗ rate(τ) dτ`.
///
/// Only the rate `f = ṙ` needs a closed form; the simulator integrates `r`
/// alongside everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub initial: Vec<f64>,
    pub rate: SignalDescriptor,
}

impl Reference {
    pub fn new(initial: Vec<f64>, rate: SignalDescriptor) -> Result<Self> {
        let r = Self { initial, rate };
        r.validate()?;
        Ok(r)
    }

    /// Constant reference sitting at `value`.
    pub fn constant(value: &[f64]) -> Self {
        Self {
            initial: value.to_vec(),
            rate: SignalDescriptor::zero(value.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        if self.initial.len() != self.rate.dim() {
            return Err(Error::DimensionMismatch(format!(
                "reference initial value has {} components but its rate has {}",
                self.initial.len(),
                self.rate.dim()
            )));
        }
        if !self.initial.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(
                "reference initial value is not finite".into(),
            ));
        }
        Ok(())
    }
}

/// The common velocity `q₀(t)` of the four moving targets:
/// `(0.75 - 0.25 cos 0.24t) · [cos(π/9 + 0.5 sin 0.2t), sin(π/9 + 0.5 sin 0.2t)]`.
pub fn target_base_velocity() -> SignalDescriptor {
    let rot = |axis| Term::Rotating {
        axis,
        scale: 1.0,
        magnitude: 0.75,
        magnitude_swing: -0.25,
        magnitude_freq: 0.24,
        heading: PI / 9.0,
        heading_swing: 0.5,
        heading_freq: 0.2,
    };
    SignalDescriptor {
        components: vec![vec![rot(Axis::Cos)], vec![rot(Axis::Sin)]],
    }
}

/// Initial positions and velocity signals of the four moving targets.
pub fn moving_targets() -> Vec<Reference> {
    let cos = |amplitude, frequency| Term::Cos {
        amplitude,
        frequency,
        phase: 0.0,
    };
    let wiggles = [
        [cos(0.1, 0.2), cos(-0.2, 0.4)],
        [cos(-0.2, 0.4), cos(0.1, 0.2)],
        [cos(-0.1, 0.2), cos(0.2, 0.4)],
        [cos(0.2, 0.4), cos(-0.1, 0.2)],
    ];
    let initial = [[1.8, 1.2], [-1.2, 1.8], [-1.8, -1.2], [1.2, -1.8]];
    let base = target_base_velocity();
    initial
        .iter()
        .zip(wiggles)
        .map(|(p0, [wx, wy])| {
            let extra = SignalDescriptor {
                components: vec![vec![wx], vec![wy]],
            };
            Reference {
                initial: p0.to_vec(),
                rate: base.plus(&extra).expect("both planar"),
            }
        })
        .collect()
}

/// Ranges for the random alpha/beta split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitOptions {
    /// `r^α(0)` is drawn uniformly from this interval, per component.
    pub initial_range: (f64, f64),
    /// Each of the two perturbation sinusoids has amplitude in `[-a, a]`.
    pub perturbation_amplitude: f64,
    /// Perturbation angular frequencies are drawn from this interval.
    pub perturbation_frequency: (f64, f64),
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            initial_range: (-10.0, 10.0),
            perturbation_amplitude: 2.0,
            perturbation_frequency: (0.1, 1.0),
        }
    }
}

impl SplitOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.initial_range;
        let (flo, fhi) = self.perturbation_frequency;
        let ok = lo.is_finite()
            && hi.is_finite()
            && lo <= hi
            && self.perturbation_amplitude.is_finite()
            && self.perturbation_amplitude >= 0.0
            && flo.is_finite()
            && fhi.is_finite()
            && flo <= fhi;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid split ranges {self:?}")))
        }
    }
}

/// A reference hidden behind two sub-references whose mean is the original:
/// `r^α(0) + r^β(0) = 2r(0)` and `f^α = f + w`, `f^β = f - w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitPair {
    pub alpha: SignalDescriptor,
    pub beta: SignalDescriptor,
    pub alpha0: Vec<f64>,
    pub beta0: Vec<f64>,
    /// The bounded sinusoidal perturbation `w`.
    pub perturbation: SignalDescriptor,
}

/// Splits `reference` with a seeded draw.
///
/// Draw order, per component `d`: `r^α(0)[d]`. Then per component, two
/// `(amplitude, frequency)` pairs for `w[d] = Σ a·sin(ω t)`.
pub fn split(reference: &Reference, seed: u64, options: &SplitOptions) -> Result<SplitPair> {
    if !reference.rate.is_bounded() {
        return Err(Error::UnboundedSignal(
            "reference rate has a linear term; its split would be unbounded".into(),
        ));
    }
    options.validate()?;
    let m = reference.dim();
    let mut rng = SplitMix64::new(seed);
    let (lo, hi) = options.initial_range;
    let alpha0: Vec<f64> = (0..m).map(|_| rng.uniform(lo, hi)).collect();
    let beta0: Vec<f64> = reference
        .initial
        .iter()
        .zip(&alpha0)
        .map(|(r, a)| 2.0 * r - a)
        .collect();

    let amp = options.perturbation_amplitude;
    let (flo, fhi) = options.perturbation_frequency;
    let w_components = (0..m)
        .map(|_| {
            (0..2)
                .map(|_| {
                    let amplitude = rng.uniform(-amp, amp);
                    let frequency = rng.uniform(flo, fhi);
                    Term::Sin {
                        amplitude,
                        frequency,
                        phase: 0.0,
                    }
                })
                .collect()
        })
        .collect();
    let perturbation = SignalDescriptor {
        components: w_components,
    };

    Ok(SplitPair {
        alpha: reference.rate.plus(&perturbation)?,
        beta: reference.rate.minus(&perturbation)?,
        alpha0,
        beta0,
        perturbation,
    })
}

/// Per-agent split seeds derived from one scenario seed.
pub fn agent_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}
