//! Covariance of latent opinions under Poisson intensities.
//!
//! With `M = A diag(mu) - omega I`, the mean `m` and covariance `G` of the
//! latent opinions given the history up to `t0` satisfy
//!
//! ```text
//! dm/dt = M m + omega alpha
//! dG/dt = M G + G M' + A diag(mu_v (sigma_v^2 + G_vv + m_v^2)) A'
//! ```
//!
//! with `G(t0) = 0`. The last term is the jump variance: user `v` posts at
//! rate `mu_v` and each message `m ~ N(x_v, sigma_v^2)` moves every follower
//! `i` by `a_vi m`. Both are integrated together with RK4.

use nalgebra::DMatrix;

use super::expm::LinearOperator;
use super::ode::rk4_step_doubling;
use super::stability::{dense_spectral_abscissa, growth_rate_estimate, Regime, StabilityReport};
use super::{drift_matrix, ForecastState, ODE_TOLERANCE};
use crate::error::{Error, Result};
use crate::params::{ModelParams, SparseMatrix};

/// Largest network the `n^2`-dimensional covariance ODE is run on.
pub const COVARIANCE_CAP: usize = 64;
/// The stability operator is formed densely (`n^4` entries) up to this `n`.
const DENSE_STABILITY_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceForecast {
    pub mean: Vec<f64>,
    pub gamma: DMatrix<f64>,
    pub t: f64,
}

impl CovarianceForecast {
    pub fn variance(&self) -> Vec<f64> {
        self.gamma.diagonal().iter().copied().collect()
    }
}

fn require_poisson(params: &ModelParams) -> Result<()> {
    if params.b.is_zero() {
        Ok(())
    } else {
        Err(Error::invalid(
            "covariance dynamics are only available for Poisson intensities (B = 0); use monte-carlo variance",
        ))
    }
}

/// Mean and covariance of the latent opinions at `t`, integrated from
/// `state` with initial step `step`.
pub fn covariance_dynamics(state: &ForecastState, params: &ModelParams, t: f64, step: f64) -> Result<CovarianceForecast> {
    covariance_dynamics_capped(state, params, t, step, COVARIANCE_CAP)
}

pub fn covariance_dynamics_capped(
    state: &ForecastState,
    params: &ModelParams,
    t: f64,
    step: f64,
    cap: usize,
) -> Result<CovarianceForecast> {
    let n = params.n_users();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    require_poisson(params)?;
    if state.x0.len() != n {
        return Err(Error::invalid("forecast state does not match the parameter dimension"));
    }
    if t < state.t0 {
        return Err(Error::NegativeDuration { dt: t - state.t0 });
    }
    let m = drift_matrix(params, &params.mu);
    let at = params.a.transpose();
    let omega = params.omega;
    let noise: Vec<f64> = params.sigma.iter().map(|s| s * s).collect();

    let mut y0 = state.x0.clone();
    y0.resize(n + n * n, 0.0);
    let mut p = vec![0.0; n * n];
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
        let (mean, gamma) = y.split_at(n);
        let (dmean, dgamma) = dy.split_at_mut(n);
        m.mul_vec(mean, dmean);
        for i in 0..n {
            dmean[i] += omega * params.alpha[i];
        }
        // P = M G
        p.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            for (k, mik) in m.row(i) {
                let src = &gamma[k * n..(k + 1) * n];
                for (d, s) in p[i * n..(i + 1) * n].iter_mut().zip(src) {
                    *d += mik * s;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                dgamma[i * n + j] = p[i * n + j] + p[j * n + i];
            }
        }
        for v in 0..n {
            let d = params.mu[v] * (noise[v] + gamma[v * n + v] + mean[v] * mean[v]);
            if d == 0.0 {
                continue;
            }
            for (i, aiv) in at.row(v) {
                for (j, ajv) in at.row(v) {
                    dgamma[i * n + j] += d * aiv * ajv;
                }
            }
        }
    };
    let sol = rk4_step_doubling(rhs, &y0, state.t0, t, step, ODE_TOLERANCE)?;
    let mut gamma = DMatrix::from_row_slice(n, n, &sol.y[n..]);
    gamma = (&gamma + gamma.transpose()) * 0.5;
    Ok(CovarianceForecast {
        mean: sol.y[..n].to_vec(),
        gamma,
        t,
    })
}

/// The homogeneous part of the covariance ODE as a linear map on
/// row-major `n x n` matrices: `G -> M G + G M' + A diag(mu_v G_vv) A'`.
pub struct CovarianceOperator {
    n: usize,
    m: SparseMatrix,
    at: SparseMatrix,
    mu: Vec<f64>,
    norm1: f64,
    trace: f64,
}

impl CovarianceOperator {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.n_users();
        let m = drift_matrix(params, &params.mu);
        let at = params.a.transpose();
        let jump_norm = (0..n)
            .map(|v| params.mu[v] * at.row(v).map(|(_, a)| a.abs()).sum::<f64>().powi(2))
            .fold(0.0, f64::max);
        let trace = 2.0 * n as f64 * m.trace() + (0..n).map(|v| params.mu[v] * params.a.get(v, v).powi(2)).sum::<f64>();
        Self {
            n,
            norm1: 2.0 * m.norm1() + jump_norm,
            trace,
            m,
            at,
            mu: params.mu.clone(),
        }
    }

    /// The `n^2 x n^2` matrix of the map.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.n * self.n;
        let mut out = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for c in 0..d {
            e[c] = 1.0;
            self.apply_into(&e, &mut col);
            out.column_mut(c).copy_from_slice(&col);
            e[c] = 0.0;
        }
        out
    }
}

impl LinearOperator for CovarianceOperator {
    fn dim(&self) -> usize {
        self.n * self.n
    }

    fn apply_into(&self, g: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            for (k, mik) in self.m.row(i) {
                for j in 0..n {
                    // (M G)_ij and (G M')_ji
                    out[i * n + j] += mik * g[k * n + j];
                    out[j * n + i] += mik * g[j * n + k];
                }
            }
        }
        for v in 0..n {
            let d = self.mu[v] * g[v * n + v];
            if d == 0.0 {
                continue;
            }
            for (i, aiv) in self.at.row(v) {
                for (j, ajv) in self.at.row(v) {
                    out[i * n + j] += d * aiv * ajv;
                }
            }
        }
    }

    fn norm1(&self) -> f64 {
        self.norm1
    }

    fn trace(&self) -> f64 {
        self.trace
    }
}

/// Stability of the covariance dynamics: the largest real part of the
/// spectrum of [`CovarianceOperator`] must be negative.
pub fn covariance_stability(params: &ModelParams) -> Result<StabilityReport> {
    require_poisson(params)?;
    let n = params.n_users();
    if n > COVARIANCE_CAP {
        return Err(Error::TooLarge { n, cap: COVARIANCE_CAP });
    }
    let op = CovarianceOperator::new(params);
    let statistic = if n <= DENSE_STABILITY_LIMIT {
        dense_spectral_abscissa(&op.to_dense())
    } else {
        growth_rate_estimate(&op)?
    };
    Ok(StabilityReport {
        regime: Regime::Covariance,
        statistic,
        threshold: 0.0,
        stable: statistic < 0.0,
        steady_state: None,
        rates: params.mu.clone(),
    })
}
