//! Scalar summaries of consensus and formation traces.

use serde::Serialize;

use crate::consensus::{agent_mean, fit_decay_rate};
use crate::error::{Error, Result};
use crate::formation::lyapunov_bound;
use crate::sim::scenario::{FormationSection, Mode, Scenario};
use crate::sim::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusSummary {
    /// `max_i ‖x_i - avg‖` at the final sample, on the broadcast states.
    pub tracking_error_final: f64,
    /// Agent mean of the broadcast states at the final sample.
    pub consensus_value: Vec<f64>,
    /// True average of the references at the final sample.
    pub average_final: Vec<f64>,
    pub disagreement_final: f64,
    /// Fitted exponential decay rate of the disagreement, if a window was given.
    pub decay_rate: Option<f64>,
    /// Largest `‖Σ(x^α + x^β) - 2Σr‖` over the run (decomposed only).
    pub conservation_max: Option<f64>,
}

pub fn consensus_summary(
    trace: &Trace,
    sc: &Scenario,
    fit_window: Option<(f64, f64)>,
) -> Result<ConsensusSummary> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let (n, m) = (sc.n(), sc.m);
    let last = trace.len() - 1;
    let prefix = match sc.mode {
        Mode::Conventional => "x",
        Mode::Decomposed => "x_alpha",
    };
    let mut broadcast = Vec::with_capacity(n * m);
    for i in 1..=n {
        for d in 0..m {
            broadcast.push(trace.value(&format!("{prefix}_{i}_{d}"), last)?);
        }
    }
    let tracking_error_final = (1..=n)
        .map(|i| trace.value(&format!("err_{i}"), last))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let average_final = (0..m)
        .map(|d| trace.value(&format!("avg_{d}"), last))
        .collect::<Result<_>>()?;
    let decay_rate = match fit_window {
        None => None,
        Some((a, b)) => {
            let dis = trace.channel("disagreement")?;
            let (ts, vs): (Vec<f64>, Vec<f64>) = trace
                .times()
                .iter()
                .zip(&dis)
                .filter(|(t, _)| **t >= a && **t <= b)
                .map(|(t, v)| (*t, *v))
                .unzip();
            fit_decay_rate(&ts, &vs)
        }
    };
    let conservation_max = if trace.has_channel("conservation") {
        Some(
            trace
                .channel("conservation")?
                .into_iter()
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(ConsensusSummary {
        tracking_error_final,
        consensus_value: agent_mean(&broadcast, m),
        average_final,
        disagreement_final: trace.last("disagreement")?,
        decay_rate,
        conservation_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormationMetrics {
    /// Largest `|e_x|`, `|e_y|`, `|e_θ|` over all robots in the final window.
    pub final_errors: [f64; 3],
    /// Largest per-robot mean of `W` over the dissipation window.
    pub dissipation_tail_mean: f64,
    /// Largest `V(t) / bound(V(0))` over all robots and samples.
    pub lyapunov_ratio: f64,
    /// Largest `|θ̇_d|` (finite differences) after the skip window.
    pub heading_rate_sup: f64,
    /// Whether `γ3` exceeds `heading_rate_sup`, which the envelope on `V`
    /// assumes.
    pub gamma3_adequate: bool,
    pub errors_pass: bool,
    pub dissipation_pass: bool,
    pub lyapunov_pass: bool,
    pub warnings: Vec<String>,
}

impl FormationMetrics {
    pub fn pass(&self) -> bool {
        self.errors_pass && self.dissipation_pass && self.lyapunov_pass
    }
}

pub fn formation_summary(trace: &Trace, section: &FormationSection) -> Result<FormationMetrics> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let times = trace.times();
    let t_end = *times.last().expect("non-empty");
    let robots = section.robots.len();
    let gains = &section.gains;

    let mut final_errors = [0.0f64; 3];
    let mut tail_mean = 0.0f64;
    let mut ratio = 0.0f64;
    let mut heading_rate = 0.0f64;
    for i in 1..=robots {
        for (slot, name) in ["e_x", "e_y", "e_theta"].iter().enumerate() {
            let series = trace.channel(&format!("{name}_{i}"))?;
            for (t, v) in times.iter().zip(&series) {
                if *t >= t_end - section.final_window {
                    final_errors[slot] = final_errors[slot].max(v.abs());
                }
            }
        }

        let w = trace.channel(&format!("W_{i}"))?;
        let tail: Vec<f64> = times
            .iter()
            .zip(&w)
            .filter(|(t, _)| **t >= t_end - section.dissipation_window)
            .map(|(_, v)| *v)
            .collect();
        if !tail.is_empty() {
            tail_mean = tail_mean.max(tail.iter().sum::<f64>() / tail.len() as f64);
        }

        let v = trace.channel(&format!("V_{i}"))?;
        let bound = lyapunov_bound(v[0], gains);
        ratio = ratio.max(v.iter().fold(0.0f64, |a, x| a.max(*x)) / bound);

        let theta_d = trace.channel(&format!("theta_d_{i}"))?;
        for k in 1..times.len() {
            if times[k - 1] >= section.heading_check_skip {
                let rate = (theta_d[k] - theta_d[k - 1]) / (times[k] - times[k - 1]);
                heading_rate = heading_rate.max(rate.abs());
            }
        }
    }

    let gamma3_adequate = gains.gamma3 > heading_rate;
    let mut warnings = Vec::new();
    if !gamma3_adequate {
        warnings.push(format!(
            "gamma3 = {} does not exceed sup |theta_d rate| = {heading_rate:.4} after t = {}; the V envelope is not guaranteed",
            gains.gamma3, section.heading_check_skip
        ));
    }
    Ok(FormationMetrics {
        final_errors,
        dissipation_tail_mean: tail_mean,
        lyapunov_ratio: ratio,
        heading_rate_sup: heading_rate,
        gamma3_adequate,
        errors_pass: final_errors.iter().all(|e| *e <= section.error_threshold),
        dissipation_pass: tail_mean <= section.dissipation_threshold,
        lyapunov_pass: ratio <= 1.0 + section.lyapunov_margin,
        warnings,
    })
}
