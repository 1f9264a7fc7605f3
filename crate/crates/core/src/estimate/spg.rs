//! Spectral projected gradient on the nonnegative orthant.
//!
//! Barzilai-Borwein steps with a nonmonotone line search against the
//! largest of the last `memory` objective values, backtracking by
//! safeguarded quadratic interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpgConfig {
    /// Largest allowed spectral step.
    pub alpha_max: f64,
    /// Smallest allowed spectral step.
    pub alpha_min: f64,
    /// Step used on the first iteration, clamped into `[alpha_min, alpha_max]`.
    pub alpha_init: f64,
    /// Number of past objective values the line search compares against.
    pub memory: usize,
    /// Stop once the sup-norm of the projected gradient step falls below this.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    pub max_iters: usize,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self {
            alpha_max: 1e4,
            alpha_min: 1e-10,
            alpha_init: 1.0,
            memory: 10,
            tolerance: 1e-6,
            sufficient_decrease: 1e-4,
            max_iters: 500,
        }
    }
}

impl SpgConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_max > 0.0
            && self.alpha_min > 0.0
            && self.alpha_min <= self.alpha_max
            && self.alpha_init > 0.0
            && self.memory >= 1
            && self.tolerance > 0.0
            && self.sufficient_decrease > 0.0
            && self.sufficient_decrease < 1.0
            && self.max_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid SPG configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    /// Sup-norm of `P(x - grad) - x` at the returned point.
    pub projected_gradient: f64,
    pub converged: bool,
}

fn project(x: &mut [f64]) {
    for v in x {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(x, g)| ((x - g).max(0.0) - x).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over `x >= 0`. `objective(x, grad)` returns `f(x)` and fills
/// `grad`; it may return `+inf` outside the domain, which the line search
/// treats as a failed trial.
pub fn spg_minimize<F>(mut objective: F, x0: &[f64], config: &SpgConfig) -> Result<SpgOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    config.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("objective is not finite at the starting point"));
    }
    let initial = f;
    let mut history = std::collections::VecDeque::with_capacity(config.memory);
    history.push_back(f);

    let mut step = config.alpha_init.clamp(config.alpha_min, config.alpha_max);
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut pg = projected_gradient_norm(&x, &g);
    let mut iterations = 0;

    while pg > config.tolerance && iterations < config.max_iters {
        iterations += 1;
        for i in 0..n {
            d[i] = (x[i] - step * g[i]).max(0.0) - x[i];
        }
        let slope: f64 = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            // no descent is possible along the projected arc at this scale
            break;
        }
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut lambda = 1.0;
        let f_new = loop {
            for i in 0..n {
                trial[i] = (x[i] + lambda * d[i]).max(0.0);
            }
            let ft = objective(&trial, &mut g_trial);
            if ft.is_finite() && ft <= f_ref + config.sufficient_decrease * lambda * slope {
                break Some(ft);
            }
            let next = if ft.is_finite() {
                let denom = 2.0 * (ft - f - lambda * slope);
                let q = -slope * lambda * lambda / denom;
                if denom > 0.0 && q >= 0.1 * lambda && q <= 0.9 * lambda {
                    q
                } else {
                    0.5 * lambda
                }
            } else {
                0.5 * lambda
            };
            lambda = next;
            if lambda < 1e-20 {
                break None;
            }
        };
        let Some(f_new) = f_new else { break };

        let mut sty = 0.0;
        let mut yty = 0.0;
        for i in 0..n {
            let s = trial[i] - x[i];
            let y = g_trial[i] - g[i];
            sty += s * y;
            yty += y * y;
        }
        // the spectral coefficient is y'y / s'y; the step is its reciprocal
        step = if sty > 0.0 && yty > 0.0 {
            (sty / yty).clamp(config.alpha_min, config.alpha_max)
        } else {
            config.alpha_max
        };

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = f_new;
        if history.len() == config.memory {
            history.pop_front();
        }
        history.push_back(f);
        pg = projected_gradient_norm(&x, &g);
    }

    Ok(SpgOutcome {
        x,
        objective: f,
        initial_objective: initial,
        iterations,
        projected_gradient: pg,
        converged: pg <= config.tolerance,
    })
}
