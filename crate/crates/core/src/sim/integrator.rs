//! Classical fixed-step fourth-order Runge–Kutta.

use crate::error::{Error, Result};

/// Reusable stage buffers for repeated RK4 steps on a state of fixed length.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            stage: vec![0.0; len],
        }
    }

    /// Advances `y` from `t` to `t + dt` in place.
    ///
    /// Fails without touching `y` if any stage derivative is non-finite.
    pub fn step<F>(&mut self, mut rhs: F, t: f64, y: &mut [f64], dt: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        debug_assert_eq!(y.len(), self.k1.len());
        let half = 0.5 * dt;

        rhs(t, y, &mut self.k1)?;
        check_stage(&self.k1, 1, t)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = y + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k2)?;
        check_stage(&self.k2, 2, t)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = y + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k3)?;
        check_stage(&self.k3, 3, t)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = y + dt * k;
        }
        rhs(t + dt, &self.stage, &mut self.k4)?;
        check_stage(&self.k4, 4, t)?;

        let sixth = dt / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn check_stage(k: &[f64], stage: usize, t: f64) -> Result<()> {
    match k.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite {
            what: format!("RK4 stage {stage}, state index {i}"),
            t,
        }),
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(rhs: F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut next = y.to_vec();
    Rk4::new(y.len()).step(rhs, t, &mut next, dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay(_t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -y[0];
        Ok(())
    }

    fn integrate(dt: f64, horizon: f64) -> f64 {
        let steps = (horizon / dt).round() as usize;
        let mut y = [1.0];
        let mut rk = Rk4::new(1);
        for k in 0..steps {
            rk.step(decay, k as f64 * dt, &mut y, dt).unwrap();
        }
        y[0]
    }

    #[test]
    fn zero_field_leaves_state() {
        let y = rk4_step(
            |_, _, out: &mut [f64]| {
                out.fill(0.0);
                Ok(())
            },
            0.0,
            &[1.5, -2.0],
            0.1,
        )
        .unwrap();
        assert_eq!(y, vec![1.5, -2.0]);
    }

    #[test]
    fn exponential_growth_one_step() {
        let y = rk4_step(
            |_, y: &[f64], out: &mut [f64]| {
                out[0] = y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            0.1,
        )
        .unwrap();
        assert_abs_diff_eq!(y[0], 0.1f64.exp(), epsilon = 1e-7);
        assert_abs_diff_eq!(y[0], 1.105_170_83, epsilon = 1e-7);
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = (-2.0f64).exp();
        let coarse = (integrate(0.2, 2.0) - exact).abs();
        let fine = (integrate(0.1, 2.0) - exact).abs();
        let ratio = coarse / fine;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn time_dependent_field() {
        // ẏ = cos t  →  y = sin t
        let dt = 0.01;
        let mut y = [0.0];
        let mut rk = Rk4::new(1);
        for k in 0..100 {
            rk.step(
                |t, _, out: &mut [f64]| {
                    out[0] = t.cos();
                    Ok(())
                },
                k as f64 * dt,
                &mut y,
                dt,
            )
            .unwrap();
        }
        assert_abs_diff_eq!(y[0], 1f64.sin(), epsilon = 1e-10);
    }

    #[test]
    fn non_finite_stage_aborts() {
        let mut y = [1.0];
        let err = Rk4::new(1)
            .step(
                |_, y: &[f64], out: &mut [f64]| {
                    out[0] = 1.0 / (y[0] - 1.0);
                    Ok(())
                },
                0.0,
                &mut y,
                0.1,
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(y, [1.0]);
    }
}
