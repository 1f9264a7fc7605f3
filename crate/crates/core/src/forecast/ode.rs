//! Fixed-step RK4 with step-doubling error control.

use crate::error::{Error, Result};

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` with `n_steps` equal RK4
/// steps.
pub fn rk4<F>(f: &mut F, y0: &[f64], t0: f64, t1: f64, n_steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if n_steps == 0 || t1 == t0 {
        return y;
    }
    let h = (t1 - t0) / n_steps as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..n_steps {
        let t = t0 + step as f64 * h;
        f(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub y: Vec<f64>,
    /// Step size of the returned solution.
    pub step: f64,
    /// Scaled max-norm change between the last two step sizes.
    pub change: f64,
}

const MAX_HALVINGS: usize = 12;

/// Integrates with step `step`, then repeatedly halves it until halving
/// changes the result by at most `tol` (relative to `max(1, |y|)`). The
/// finer of the last two solutions is returned.
pub fn rk4_step_doubling<F>(mut f: F, y0: &[f64], t0: f64, t1: f64, step: f64, tol: f64) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("ODE step must be > 0, got {step}")));
    }
    if !(t1 >= t0) {
        return Err(Error::NegativeDuration { dt: t1 - t0 });
    }
    if t1 == t0 {
        return Ok(OdeSolution {
            y: y0.to_vec(),
            step,
            change: 0.0,
        });
    }
    let mut n_steps = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let mut coarse = rk4(&mut f, y0, t0, t1, n_steps);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        n_steps *= 2;
        let fine = rk4(&mut f, y0, t0, t1, n_steps);
        change = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if change.is_nan() {
            break;
        }
        if change <= tol {
            return Ok(OdeSolution {
                y: fine,
                step: (t1 - t0) / n_steps as f64,
                change,
            });
        }
        coarse = fine;
    }
    Err(Error::NotConverged {
        method: "RK4 step doubling",
        iterations: n_steps,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let sol = rk4_step_doubling(|_, y, dy| dy[0] = -2.0 * y[0], &[1.0], 0.0, 1.0, 0.1, 1e-10).unwrap();
        assert!((sol.y[0] - (-2f64).exp()).abs() < 1e-10);
        assert!(sol.change <= 1e-10);
    }

    #[test]
    fn time_dependent_rhs() {
        // dy/dt = cos t, y(0) = 0
        let sol = rk4_step_doubling(|t, _, dy| dy[0] = t.cos(), &[0.0], 0.0, 2.0, 0.5, 1e-12).unwrap();
        assert!((sol.y[0] - 2f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn zero_interval_returns_start() {
        let sol = rk4_step_doubling(|_, _, dy| dy[0] = 1.0, &[3.0], 1.0, 1.0, 0.1, 1e-6).unwrap();
        assert_eq!(sol.y, vec![3.0]);
    }

    #[test]
    fn rejects_backwards_and_bad_step() {
        assert!(rk4_step_doubling(|_, _, _| {}, &[0.0], 1.0, 0.0, 0.1, 1e-6).is_err());
        assert!(rk4_step_doubling(|_, _, _| {}, &[0.0], 0.0, 1.0, 0.0, 1e-6).is_err());
    }
}
