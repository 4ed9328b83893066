//! Physical layer of consensus-driven formation control: unicycle
//! kinematics, body-frame tracking errors, the vanishing excitation signal
//! `ρ`, the velocity controller and its Lyapunov monitors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this speed the desired heading is undefined and held.
pub const HEADING_HOLD_SPEED: f64 = 1e-9;
/// Below this radial error the `ρ̇` radial term is dropped.
pub const RADIAL_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub s_x: f64,
    pub s_y: f64,
    /// Unwrapped heading.
    pub theta: f64,
}

/// Auxiliary per-robot state: `ϖ` (integrated as `ϖ̇ = -|v_d| ϖ`, `ϖ(0) = 1`)
/// and the constant formation offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationAux {
    pub varpi: f64,
    pub bias: [f64; 2],
}

/// Body-frame position errors and heading error, before `ρ` is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormationErrors {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
    pub e_theta_bar: f64,
    pub rho: f64,
}

impl FormationErrors {
    pub fn new(base: TrackingErrors, rho: f64) -> Self {
        Self {
            e_x: base.e_x,
            e_y: base.e_y,
            e_theta: base.e_theta,
            e_theta_bar: base.e_theta - rho,
            rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub iota0: f64,
    pub iota1: f64,
    pub iota2: f64,
    /// Width of the `tanh(x/ε)` stand-in for `sgn`; 0 means exact `sgn`.
    pub sgn_epsilon: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            gamma1: 1.5,
            gamma2: 2.0,
            gamma3: 1.0,
            gamma4: 5.0,
            iota0: 1.0,
            iota1: 1.0,
            iota2: 1.0,
            sgn_epsilon: 0.1,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.gamma4,
            self.iota0,
            self.iota1,
            self.iota2,
        ];
        if !positive.iter().all(|g| g.is_finite() && *g > 0.0) {
            return Err(Error::Config(format!(
                "controller gains must be positive: {self:?}"
            )));
        }
        if !(self.sgn_epsilon.is_finite() && self.sgn_epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "sgn_epsilon must be non-negative, got {}",
                self.sgn_epsilon
            )));
        }
        Ok(())
    }

    fn sgn(&self, x: f64) -> f64 {
        if self.sgn_epsilon > 0.0 {
            (x / self.sgn_epsilon).tanh()
        } else if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// `(ṡ_x, ṡ_y, θ̇) = (v cos θ, v sin θ, ω)`.
pub fn unicycle_rhs(pose: &RobotPose, v: f64, omega: f64) -> [f64; 3] {
    [v * pose.theta.cos(), v * pose.theta.sin(), omega]
}

/// Desired heading and speed from the broadcast-state velocity `ċ`.
///
/// The heading is `atan2(ċ_y, ċ_x)` shifted by a multiple of 2π to lie
/// closest to `previous`. When `‖ċ‖ < HEADING_HOLD_SPEED` the heading is
/// undefined and `previous` is returned unchanged (0 if there is none).
pub fn desired_heading_velocity(c_dot: [f64; 2], previous: Option<f64>) -> (f64, f64) {
    let v_d = c_dot[0].hypot(c_dot[1]);
    if v_d < HEADING_HOLD_SPEED {
        return (previous.unwrap_or(0.0), v_d);
    }
    let raw = c_dot[1].atan2(c_dot[0]);
    let theta_d = match previous {
        Some(prev) => unwrap_near(raw, prev),
        None => raw,
    };
    (theta_d, v_d)
}

/// `angle + 2πk` closest to `reference`.
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    angle + tau * ((reference - angle) / tau).round()
}

/// Rotates `s - c - b` into the robot frame and takes `e_θ = θ - θ_d`.
pub fn compute_errors(
    pose: &RobotPose,
    c_alpha: [f64; 2],
    bias: [f64; 2],
    theta_d: f64,
) -> TrackingErrors {
    let dx = pose.s_x - c_alpha[0] - bias[0];
    let dy = pose.s_y - c_alpha[1] - bias[1];
    let (sin, cos) = pose.theta.sin_cos();
    TrackingErrors {
        e_x: cos * dx + sin * dy,
        e_y: -sin * dx + cos * dy,
        e_theta: pose.theta - theta_d,
    }
}

/// `ρ = ι0 ϖ tanh(ι1 ‖e‖) sin(ι2 t)` and its time derivative.
///
/// `de_x`, `de_y` are the error rates. Any pure-rotation contribution
/// (`ω e_y`, `-ω e_x`) leaves `‖e‖` unchanged, so callers may omit it.
#[allow(clippy::too_many_arguments)]
pub fn rho_and_derivative(
    t: f64,
    e_x: f64,
    e_y: f64,
    varpi: f64,
    v_d: f64,
    de_x: f64,
    de_y: f64,
    gains: &ControllerGains,
) -> (f64, f64) {
    let radial = e_x.hypot(e_y);
    let radial_dot = if radial < RADIAL_GUARD {
        0.0
    } else {
        (e_x * de_x + e_y * de_y) / radial
    };
    let varpi_dot = -v_d.abs() * varpi;
    let th = (gains.iota1 * radial).tanh();
    let (sin, cos) = (gains.iota2 * t).sin_cos();
    let rho = gains.iota0 * varpi * th * sin;
    let rho_dot = gains.iota0
        * (varpi_dot * th * sin
            + varpi * gains.iota1 * (1.0 - th * th) * radial_dot * sin
            + varpi * th * gains.iota2 * cos);
    (rho, rho_dot)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `(sin e_θ - sin ρ) / (e_θ - ρ)`, written as
/// `cos((e_θ + ρ)/2) · sinc((e_θ - ρ)/2)` so it stays finite at `e_θ = ρ`.
pub fn sine_difference_quotient(e_theta: f64, rho: f64) -> f64 {
    ((e_theta + rho) / 2.0).cos() * sinc((e_theta - rho) / 2.0)
}

/// Velocity inputs
///
/// ```text
/// v = -γ1 tanh(e_x) + cos(e_θ) v_d
/// ω = -γ2 tanh(ē_θ) + ρ̇ - γ3 sgn(ē_θ) - γ4 [(sin e_θ - sin ρ)/ē_θ] v_d e_y
/// ```
pub fn control_law(
    err: &FormationErrors,
    v_d: f64,
    rho_dot: f64,
    gains: &ControllerGains,
) -> Result<(f64, f64)> {
    let inputs = [
        err.e_x,
        err.e_y,
        err.e_theta,
        err.e_theta_bar,
        err.rho,
        v_d,
        rho_dot,
    ];
    if !inputs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            what: "controller input".into(),
            t: f64::NAN,
        });
    }
    let v = -gains.gamma1 * err.e_x.tanh() + err.e_theta.cos() * v_d;
    let omega = -gains.gamma2 * err.e_theta_bar.tanh() + rho_dot
        - gains.gamma3 * gains.sgn(err.e_theta_bar)
        - gains.gamma4 * sine_difference_quotient(err.e_theta, err.rho) * v_d * err.e_y;
    Ok((v, omega))
}

/// `V = γ4 (e_x² + e_y²)/2 + ē_θ²/2` and
/// `W = γ1 γ4 e_x tanh(e_x) + γ2 ē_θ tanh(ē_θ)`.
pub fn lyapunov_monitor(err: &FormationErrors, gains: &ControllerGains) -> (f64, f64) {
    let v = 0.5 * gains.gamma4 * (err.e_x * err.e_x + err.e_y * err.e_y)
        + 0.5 * err.e_theta_bar * err.e_theta_bar;
    let w = gains.gamma1 * gains.gamma4 * err.e_x * err.e_x.tanh()
        + gains.gamma2 * err.e_theta_bar * err.e_theta_bar.tanh();
    (v, w)
}

/// Upper envelope `(√V(0) + √(γ4/2) ι0)²` for `V(t)`, valid while
/// `γ3 > sup |θ̇_d|`.
pub fn lyapunov_bound(v0: f64, gains: &ControllerGains) -> f64 {
    (v0.sqrt() + (gains.gamma4 / 2.0).sqrt() * gains.iota0).powi(2)
}

/// Everything the robot layer produces at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotEval {
    pub pose_dot: [f64; 3],
    pub varpi_dot: f64,
    pub theta_d: f64,
    pub v_d: f64,
    pub errors: FormationErrors,
    pub v: f64,
    pub omega: f64,
    pub lyapunov: f64,
    pub dissipation: f64,
}

/// Closed-loop robot dynamics for one robot, given the broadcast estimate
/// `c` and its exact rate `ċ` from the consensus layer.
#[allow(clippy::too_many_arguments)]
pub fn robot_rhs(
    t: f64,
    pose: &RobotPose,
    aux: &FormationAux,
    c: [f64; 2],
    c_dot: [f64; 2],
    theta_d_ref: Option<f64>,
    gains: &ControllerGains,
) -> Result<RobotEval> {
    let (theta_d, v_d) = desired_heading_velocity(c_dot, theta_d_ref);
    let base = compute_errors(pose, c, aux.bias, theta_d);
    let v = -gains.gamma1 * base.e_x.tanh() + base.e_theta.cos() * v_d;

    // Error rates without the rotation terms, which cancel in d‖e‖/dt.
    let (sin, cos) = pose.theta.sin_cos();
    let de_x = v - (cos * c_dot[0] + sin * c_dot[1]);
    let de_y = sin * c_dot[0] - cos * c_dot[1];
    let (rho, rho_dot) =
        rho_and_derivative(t, base.e_x, base.e_y, aux.varpi, v_d, de_x, de_y, gains);

    let errors = FormationErrors::new(base, rho);
    let (v, omega) = control_law(&errors, v_d, rho_dot, gains).map_err(|_| Error::NonFinite {
        what: "controller input".into(),
        t,
    })?;
    let (lyapunov, dissipation) = lyapunov_monitor(&errors, gains);
    Ok(RobotEval {
        pose_dot: unicycle_rhs(pose, v, omega),
        varpi_dot: -v_d.abs() * aux.varpi,
        theta_d,
        v_d,
        errors,
        v,
        omega,
        lyapunov,
        dissipation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pose(s_x: f64, s_y: f64, theta: f64) -> RobotPose {
        RobotPose { s_x, s_y, theta }
    }

    #[test]
    fn kinematics() {
        assert_eq!(
            unicycle_rhs(&pose(0.0, 0.0, 0.0), 1.0, 0.0),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            unicycle_rhs(&pose(3.0, 1.0, 0.7), 0.0, 1.0),
            [0.0, 0.0, 1.0]
        );
        let d = unicycle_rhs(&pose(0.0, 0.0, FRAC_PI_2), 1.0, 0.25);
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);
        assert_eq!(d[2], 0.25);
    }

    #[test]
    fn desired_heading() {
        assert_eq!(desired_heading_velocity([1.0, 0.0], None), (0.0, 1.0));
        let (th, v) = desired_heading_velocity([0.0, 2.0], None);
        assert_abs_diff_eq!(th, FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(v, 2.0);
        let (th, v) = desired_heading_velocity([-1.0, -1.0], None);
        assert_abs_diff_eq!(th, -3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2f64.sqrt(), epsilon = 1e-15);
        // Unwrapped next to a heading that has already turned past π.
        let (th, _) = desired_heading_velocity([-1.0, -1.0], Some(3.0));
        assert_abs_diff_eq!(th, 5.0 * PI / 4.0, epsilon = 1e-15);
        // Held when the target is at rest.
        assert_eq!(
            desired_heading_velocity([0.0, 0.0], Some(1.25)),
            (1.25, 0.0)
        );
    }

    #[test]
    fn body_frame_errors() {
        let e = compute_errors(&pose(5.0, 6.0, 0.3), [1.0, 2.0], [4.0, 4.0], 0.3);
        assert_eq!((e.e_x, e.e_y, e.e_theta), (0.0, 0.0, 0.0));
        let e = compute_errors(&pose(1.0, 0.0, 0.0), [0.0, 0.0], [0.0, 0.0], 0.0);
        assert_eq!((e.e_x, e.e_y), (1.0, 0.0));
        let e = compute_errors(&pose(1.0, 0.0, FRAC_PI_2), [0.0, 0.0], [0.0, 0.0], 0.0);
        assert_abs_diff_eq!(e.e_x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.e_y, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.e_theta, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn rho_vanishes() {
        let g = ControllerGains::default();
        for &t in &[0.0, 0.4, 3.0] {
            let (rho, _) = rho_and_derivative(t, 0.0, 0.0, 0.8, 1.0, 0.0, 0.0, &g);
            assert_eq!(rho, 0.0);
        }
        let (rho, _) = rho_and_derivative(0.0, 2.0, -1.0, 1.0, 0.5, 0.3, 0.2, &g);
        assert_eq!(rho, 0.0);
    }

    /// Finite differences of ρ along a smooth synthetic trajectory whose
    /// error rates and speed are known exactly.
    #[test]
    fn rho_derivative_matches_finite_difference() {
        let g = ControllerGains {
            iota0: 0.7,
            iota1: 1.3,
            iota2: 0.9,
            ..Default::default()
        };
        let ex = |t: f64| 1.0 + 0.5 * (0.7 * t).sin();
        let ey = |t: f64| -0.3 + 0.8 * (1.1 * t).cos();
        let dex = |t: f64| 0.35 * (0.7 * t).cos();
        let dey = |t: f64| -0.88 * (1.1 * t).sin();
        let vd = |t: f64| 0.6 + 0.2 * t.sin();
        // ϖ = exp(-∫ v_d) with ∫ v_d = 0.6 t + 0.2 (1 - cos t).
        let varpi = |t: f64| (-(0.6 * t + 0.2 * (1.0 - t.cos()))).exp();
        let rho =
            |t: f64| rho_and_derivative(t, ex(t), ey(t), varpi(t), vd(t), dex(t), dey(t), &g).0;
        let h = 1e-5;
        for k in 0..40 {
            let t = 0.05 + 0.25 * k as f64;
            let (_, analytic) =
                rho_and_derivative(t, ex(t), ey(t), varpi(t), vd(t), dex(t), dey(t), &g);
            let numeric = (rho(t + h) - rho(t - h)) / (2.0 * h);
            assert_abs_diff_eq!(analytic, numeric, epsilon = 1e-5);
        }
    }

    #[test]
    fn quotient_is_continuous_at_zero() {
        let near = sine_difference_quotient(1e-12, 0.0);
        let off = sine_difference_quotient(1e-3, 0.0);
        assert!((near - off).abs() <= 1e-6);
        let (e, r) = (0.4 + 1e-3, 0.4);
        assert_abs_diff_eq!(
            sine_difference_quotient(e, r),
            (e.sin() - r.sin()) / (e - r),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            sine_difference_quotient(0.7, 0.7),
            0.7f64.cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn control_fixed_point() {
        let g = ControllerGains::default();
        let zero = FormationErrors::new(
            TrackingErrors {
                e_x: 0.0,
                e_y: 0.0,
                e_theta: 0.0,
            },
            0.0,
        );
        assert_eq!(control_law(&zero, 0.8, 0.0, &g).unwrap(), (0.8, 0.0));
        let ex = FormationErrors::new(
            TrackingErrors {
                e_x: 0.5,
                e_y: 0.0,
                e_theta: 0.0,
            },
            0.0,
        );
        let (v, _) = control_law(&ex, 0.8, 0.0, &g).unwrap();
        assert_abs_diff_eq!(v, -1.5 * 0.5f64.tanh() + 0.8, epsilon = 1e-15);
        let bad = FormationErrors::new(
            TrackingErrors {
                e_x: f64::NAN,
                e_y: 0.0,
                e_theta: 0.0,
            },
            0.0,
        );
        assert!(control_law(&bad, 0.8, 0.0, &g).is_err());
    }

    #[test]
    fn exact_sgn_when_epsilon_is_zero() {
        let g = ControllerGains {
            sgn_epsilon: 0.0,
            ..Default::default()
        };
        assert_eq!(g.sgn(0.0), 0.0);
        assert_eq!(g.sgn(1e-300), 1.0);
        assert_eq!(g.sgn(-2.0), -1.0);
    }

    #[test]
    fn lyapunov_values() {
        let g = ControllerGains {
            gamma4: 1.0,
            ..Default::default()
        };
        let zero = FormationErrors::new(
            TrackingErrors {
                e_x: 0.0,
                e_y: 0.0,
                e_theta: 0.0,
            },
            0.0,
        );
        assert_eq!(lyapunov_monitor(&zero, &g), (0.0, 0.0));
        let ex = FormationErrors::new(
            TrackingErrors {
                e_x: 1.0,
                e_y: 0.0,
                e_theta: 0.0,
            },
            0.0,
        );
        assert_eq!(lyapunov_monitor(&ex, &g).0, 0.5);
        for k in -20..=20 {
            let x = k as f64 * 0.37;
            let e = FormationErrors::new(
                TrackingErrors {
                    e_x: x,
                    e_y: -x,
                    e_theta: x * 0.5,
                },
                0.1,
            );
            let (v, w) = lyapunov_monitor(&e, &g);
            assert!(v >= 0.0 && w >= 0.0);
        }
    }

    #[test]
    fn error_bar_identity() {
        let e = FormationErrors::new(
            TrackingErrors {
                e_x: 0.1,
                e_y: 0.2,
                e_theta: 0.9,
            },
            0.35,
        );
        assert_eq!(e.e_theta_bar, 0.9 - 0.35);
    }
}
