//! Observer-based eavesdropping attack on dynamic average consensus.
//!
//! The eavesdropper knows the adjacency matrix and κ and wiretaps every
//! broadcast state. For a victim `i` it runs
//!
//! ```text
//! c    = κ Σ_j a_ij (x_j - x_i)
//! f̂    = k3 x_i + f̂'
//! x̂'   = f̂ + c + k1 (x_i - x̂)
//! r̂'   = k2 (x_i - z - r̂) + f̂
//! f̂''  = -k3 (f̂ + c) + k4 (x_i - x̂)
//! z'   = c,            z(0) = 0
//! ```
//!
//! Because `x_i(0) = r_i(0)` and `ż = c`, the quantity `x_i - z` equals
//! `r_i` exactly under the conventional protocol, which is what makes the
//! attack work. Against the decomposed protocol the same observer is run on
//! the broadcast alpha sub-state.

use serde::{Deserialize, Serialize};

use crate::consensus::coupling_into;
use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::sim::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self {
            k1: 10.0,
            k2: 10.0,
            k3: 10.0,
            k4: 10.0,
        }
    }
}

impl ObserverGains {
    pub fn from_array([k1, k2, k3, k4]: [f64; 4]) -> Self {
        Self { k1, k2, k3, k4 }
    }

    /// All gains positive and `k3 > 1/k2`.
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.k3, self.k4];
        if !all.iter().all(|k| k.is_finite() && *k > 0.0) {
            return Err(Error::Config(format!(
                "observer gains must be positive, got {all:?}"
            )));
        }
        if self.k3 <= 1.0 / self.k2 {
            return Err(Error::Config(format!(
                "observer gains need k3 > 1/k2, got k3 = {} and 1/k2 = {}",
                self.k3,
                1.0 / self.k2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub victim: usize,
    pub gains: ObserverGains,
    /// κ as known to the eavesdropper.
    pub kappa: f64,
    /// Topology as known to the eavesdropper.
    pub graph: NetworkGraph,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if self.victim >= self.graph.n() {
            return Err(Error::Config(format!(
                "victim {} is outside the {}-agent network",
                self.victim,
                self.graph.n()
            )));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Config(format!(
                "attacker kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Estimator variables `(x̂, r̂, f̂', z)`, each of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub x_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub f_hat_prime: Vec<f64>,
    pub z: Vec<f64>,
}

impl ObserverState {
    /// All-zero start; `z(0) = 0` is required, the rest is arbitrary.
    pub fn zeros(m: usize) -> Self {
        Self {
            x_hat: vec![0.0; m],
            r_hat: vec![0.0; m],
            f_hat_prime: vec![0.0; m],
            z: vec![0.0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.z.len()
    }

    /// Flat layout used inside the simulator: `[x̂ | r̂ | f̂' | z]`.
    pub fn to_flat(&self) -> Vec<f64> {
        [&self.x_hat[..], &self.r_hat, &self.f_hat_prime, &self.z].concat()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let m = flat.len() / 4;
        Self {
            x_hat: flat[..m].to_vec(),
            r_hat: flat[m..2 * m].to_vec(),
            f_hat_prime: flat[2 * m..3 * m].to_vec(),
            z: flat[3 * m..].to_vec(),
        }
    }
}

/// Observer derivative on the flat layout `[x̂ | r̂ | f̂' | z]`.
///
/// `broadcast` is the full `n × m` block of wiretapped states; only the
/// victim's row and its neighbours' rows are read.
pub fn observer_rhs_into(
    obs: &[f64],
    broadcast: &[f64],
    cfg: &AttackConfig,
    m: usize,
    out: &mut [f64],
) {
    let ObserverGains { k1, k2, k3, k4 } = cfg.gains;
    let i = cfg.victim;
    let x = &broadcast[i * m..(i + 1) * m];
    let (x_hat, rest) = obs.split_at(m);
    let (r_hat, rest) = rest.split_at(m);
    let (f_prime, z) = rest.split_at(m);

    let mut c = vec![0.0; m];
    coupling_into(broadcast, &cfg.graph, cfg.kappa, m, i, &mut c);

    let (dx_hat, rest) = out.split_at_mut(m);
    let (dr_hat, rest) = rest.split_at_mut(m);
    let (df_prime, dz) = rest.split_at_mut(m);
    for d in 0..m {
        let f_hat = k3 * x[d] + f_prime[d];
        let x_tilde = x[d] - x_hat[d];
        dx_hat[d] = f_hat + c[d] + k1 * x_tilde;
        dr_hat[d] = k2 * (x[d] - z[d] - r_hat[d]) + f_hat;
        df_prime[d] = -k3 * (f_hat + c[d]) + k4 * x_tilde;
        dz[d] = c[d];
    }
}

/// Observer derivative from an explicit list of `(agent, broadcast state)`
/// observations. The victim and all its neighbours must be present.
pub fn observer_rhs(
    obs: &ObserverState,
    observed: &[(usize, &[f64])],
    cfg: &AttackConfig,
) -> Result<ObserverState> {
    let m = obs.m();
    let n = cfg.graph.n();
    let mut block = vec![0.0; n * m];
    let mut seen = vec![false; n];
    for &(j, x) in observed {
        if j >= n || x.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "observation of agent {j} with {} components",
                x.len()
            )));
        }
        block[j * m..(j + 1) * m].copy_from_slice(x);
        seen[j] = true;
    }
    let victim = cfg.victim;
    if let Some(missing) = std::iter::once(victim)
        .chain(cfg.graph.neighbors(victim))
        .find(|&j| !seen[j])
    {
        return Err(Error::MissingObservation(missing));
    }
    let mut out = vec![0.0; 4 * m];
    observer_rhs_into(&obs.to_flat(), &block, cfg, m, &mut out);
    Ok(ObserverState::from_flat(&out))
}

/// Current `(r̂, f̂)` with `f̂ = k3 x_i + f̂'`.
pub fn estimates(
    obs: &ObserverState,
    observed_x: &[f64],
    cfg: &AttackConfig,
) -> (Vec<f64>, Vec<f64>) {
    let f_hat = observed_x
        .iter()
        .zip(&obs.f_hat_prime)
        .map(|(x, fp)| cfg.gains.k3 * x + fp)
        .collect();
    (obs.r_hat.clone(), f_hat)
}

/// Summary of an attack run over its post-transient window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub final_error_r: f64,
    pub final_error_f: f64,
    /// Largest `‖r̃‖` in the window.
    pub sup_error_r: f64,
    /// Largest `‖f̃‖` in the window.
    pub sup_error_f: f64,
    /// `max(sup_error_r, sup_error_f)`.
    pub sup_error_after_transient: f64,
    /// Smallest `‖r̃‖` in the window.
    pub min_error_r: f64,
    /// Mean `‖r̃‖` over the second half of the window divided by the mean
    /// over the first half. Near 1 means the error is not shrinking.
    pub error_r_trend: f64,
    /// Every error sample finite, and the window maximum no more than twice
    /// the maximum over the preceding settled stretch.
    pub bounded: bool,
    pub window_start: f64,
}

/// Metrics over `t >= transient_fraction * t_final`.
pub fn attack_metrics_from_series(
    times: &[f64],
    r_err: &[f64],
    f_err: &[f64],
    transient_fraction: f64,
) -> Result<AttackMetrics> {
    if times.is_empty() || r_err.len() != times.len() || f_err.len() != times.len() {
        return Err(Error::EmptyTrace);
    }
    let t_end = *times.last().expect("non-empty");
    let start = transient_fraction.clamp(0.0, 1.0) * t_end;
    let window: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= start).collect();
    let max_of = |v: &[f64], idx: &[usize]| idx.iter().map(|&k| v[k]).fold(0.0f64, f64::max);
    let mean_of = |idx: &[usize]| {
        if idx.is_empty() {
            f64::NAN
        } else {
            idx.iter().map(|&k| r_err[k]).sum::<f64>() / idx.len() as f64
        }
    };
    let sup_r = max_of(r_err, &window);
    let sup_f = max_of(f_err, &window);
    let min_r = window
        .iter()
        .map(|&k| r_err[k])
        .fold(f64::INFINITY, f64::min);
    let mid = start + 0.5 * (t_end - start);
    let (first, second): (Vec<usize>, Vec<usize>) = window.iter().partition(|&&k| times[k] < mid);
    let trend = mean_of(&second) / mean_of(&first);

    // Settled stretch: from 1/8 of the run up to the window start.
    let settled: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= 0.125 * t_end && times[k] < start)
        .collect();
    let finite = r_err.iter().chain(f_err).all(|v| v.is_finite());
    let bounded = finite
        && (settled.is_empty()
            || sup_r.max(sup_f)
                <= 2.0 * max_of(r_err, &settled).max(max_of(f_err, &settled)) + 1e-12);

    let last = times.len() - 1;
    Ok(AttackMetrics {
        final_error_r: r_err[last],
        final_error_f: f_err[last],
        sup_error_r: sup_r,
        sup_error_f: sup_f,
        sup_error_after_transient: sup_r.max(sup_f),
        min_error_r: min_r,
        error_r_trend: trend,
        bounded,
        window_start: start,
    })
}

/// Attack metrics from a simulator trace (channels `rtilde_norm` and
/// `ftilde_norm`).
pub fn attack_metrics(trace: &Trace, transient_fraction: f64) -> Result<AttackMetrics> {
    let r = trace.channel("rtilde_norm")?;
    let f = trace.channel("ftilde_norm")?;
    attack_metrics_from_series(trace.times(), &r, &f, transient_fraction)
}
