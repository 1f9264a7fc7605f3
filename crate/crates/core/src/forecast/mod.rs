//! Conditional expectations of future opinions given a history.
//!
//! With Poisson intensities the mean opinion solves a linear ODE with
//! constant coefficients, so the forecast is one matrix-exponential action
//! and one linear solve. With self-exciting intensities (diagonal `B`) the
//! coefficient matrix becomes time dependent and the ODE is integrated
//! numerically. Monte-Carlo forecasting handles everything else.

pub mod covariance;
pub mod expm;
pub mod linear;
pub mod mc;
pub mod ode;
pub mod stability;

use serde::{Deserialize, Serialize};

pub use covariance::{covariance_dynamics, covariance_stability, CovarianceForecast, COVARIANCE_CAP};
pub use expm::{expm_action, expm_action_op, LinearOperator};
pub use linear::{gmres, solve_linear, GmresOutcome};
pub use mc::{forecast_mc, mc_sample_size, McRuns};
pub use stability::{steady_state, Regime, StabilityReport};

use crate::error::{Error, Result};
use crate::events::EventLog;
use crate::network::Network;
use crate::params::{ModelParams, SparseMatrix};
use crate::state::MarkovState;

/// Tolerance of the step-doubling check for the Hawkes mean ODE.
pub const ODE_TOLERANCE: f64 = 1e-7;

/// Opinions and intensities at the forecast origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastState {
    pub x0: Vec<f64>,
    pub eta0: Vec<f64>,
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastMethod {
    PoissonAnalytic,
    HawkesOde,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variance: Option<Vec<f64>>,
    pub method: ForecastMethod,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_runs: Option<usize>,
}

/// Default integration step: a hundredth of the fastest decay time.
pub fn default_step(params: &ModelParams) -> f64 {
    0.01 / params.omega.max(params.nu)
}

/// Opinions and intensities at `t0` given the events of `log` strictly
/// before `t0`.
pub fn reconstruct_state(log: &EventLog, params: &ModelParams, network: &Network, t0: f64) -> Result<ForecastState> {
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(Error::invalid(format!("forecast origin must be finite and >= 0, got {t0}")));
    }
    if params.n_users() != network.n_users() {
        return Err(Error::invalid("parameters and network differ in size"));
    }
    let state = MarkovState::replay(log.history_before(t0), params, network)?;
    Ok(ForecastState {
        x0: state.opinions_at(t0, params)?,
        eta0: state.intensities_at(t0, params)?,
        t0,
    })
}

fn check_state(state: &ForecastState, params: &ModelParams, t: f64) -> Result<f64> {
    let n = params.n_users();
    if state.x0.len() != n || state.eta0.len() != n {
        return Err(Error::invalid("forecast state does not match the parameter dimension"));
    }
    if !t.is_finite() {
        return Err(Error::invalid("target time must be finite"));
    }
    if t < state.t0 {
        return Err(Error::NegativeDuration { dt: t - state.t0 });
    }
    Ok(t - state.t0)
}

/// `A diag(rates) - omega I`, the drift matrix of the mean opinion.
pub fn drift_matrix(params: &ModelParams, rates: &[f64]) -> SparseMatrix {
    params.a.scale_columns(rates).add_diagonal(-params.omega)
}

/// Mean opinions at `t` under Poisson intensities `mu`:
/// `e^{M d} x0 + omega M^{-1} (e^{M d} - I) alpha` with `M = A diag(mu) - omega I`.
///
/// Writing `w = M^{-1} omega alpha` this is `e^{M d}(x0 + w) - w`. When `M` is
/// singular the second term is instead read off the augmented system
/// `[[M, omega alpha], [0, 0]]` applied to `[x0; 1]`, whose exponential
/// carries the integral of `e^{M s}` in its last column.
pub fn forecast_poisson(state: &ForecastState, params: &ModelParams, t: f64) -> Result<ForecastResult> {
    let dt = check_state(state, params, t)?;
    let m = drift_matrix(params, &params.mu);
    let rhs: Vec<f64> = params.alpha.iter().map(|a| params.omega * a).collect();
    let mean = match solve_linear(&m, &rhs) {
        Ok(w) => {
            let start: Vec<f64> = state.x0.iter().zip(&w).map(|(x, w)| x + w).collect();
            let e = expm_action(&m, &start, dt)?;
            e.iter().zip(&w).map(|(e, w)| e - w).collect()
        }
        Err(Error::Singular(_)) | Err(Error::NotConverged { .. }) => {
            log::debug!("drift matrix is singular; using the augmented exponential");
            augmented_forecast(&m, &rhs, &state.x0, dt)?
        }
        Err(e) => return Err(e),
    };
    if mean.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::Singular("forecast is not finite".into()));
    }
    Ok(ForecastResult {
        mean,
        variance: None,
        method: ForecastMethod::PoissonAnalytic,
        t,
        mc_runs: None,
    })
}

/// `e^{M d} x0 + int_0^d e^{M s} ds c` via one exponential of the
/// `(n+1)`-dimensional augmented matrix.
fn augmented_forecast(m: &SparseMatrix, c: &[f64], x0: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = m.dim();
    let trip = m
        .triplets()
        .chain(c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, n, v)));
    let aug = SparseMatrix::from_triplets(n + 1, trip)?;
    let mut start = x0.to_vec();
    start.push(1.0);
    let mut out = expm_action(&aug, &start, dt)?;
    out.truncate(n);
    Ok(out)
}

/// Expected intensities at `t` under a diagonal `B`:
/// `e^{k d} eta0 + nu mu (e^{k d} - 1) / k` per user with `k = b_uu - nu`.
pub fn expected_intensity(state: &ForecastState, params: &ModelParams, t: f64) -> Result<Vec<f64>> {
    let dt = check_state(state, params, t)?;
    if !params.b.is_diagonal() {
        return Err(Error::NonDiagonalExcitation);
    }
    Ok(expected_intensity_after(&state.eta0, params, &params.b.diagonal(), dt))
}

fn expected_intensity_after(eta0: &[f64], params: &ModelParams, b_diag: &[f64], dt: f64) -> Vec<f64> {
    let nu = params.nu;
    eta0.iter()
        .zip(&params.mu)
        .zip(b_diag)
        .map(|((&eta, &mu), &b)| {
            let k = b - nu;
            if k == 0.0 {
                eta + nu * dt * mu
            } else {
                (k * dt).exp() * eta + nu * mu * (k * dt).exp_m1() / k
            }
        })
        .collect()
}

/// Mean opinions at `t` under self-exciting intensities (diagonal `B`), by
/// integrating `dE[x]/dt = (-omega I + A diag(E[lambda](t))) E[x] + omega alpha`
/// with RK4 and step doubling from `step`.
pub fn forecast_hawkes(state: &ForecastState, params: &ModelParams, t: f64, step: f64) -> Result<ForecastResult> {
    let dt = check_state(state, params, t)?;
    if !params.b.is_diagonal() {
        return Err(Error::NonDiagonalExcitation);
    }
    let b_diag = params.b.diagonal();
    let n = params.n_users();
    let omega = params.omega;
    let t0 = state.t0;
    let mut scaled = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let rhs = |s: f64, x: &[f64], dx: &mut [f64]| {
        let rates = expected_intensity_after(&state.eta0, params, &b_diag, s - t0);
        for i in 0..n {
            scaled[i] = rates[i] * x[i];
        }
        params.a.mul_vec(&scaled, &mut ax);
        for i in 0..n {
            dx[i] = ax[i] - omega * x[i] + omega * params.alpha[i];
        }
    };
    let sol = ode::rk4_step_doubling(rhs, &state.x0, t0, t0 + dt, step, ODE_TOLERANCE)?;
    Ok(ForecastResult {
        mean: sol.y,
        variance: None,
        method: ForecastMethod::HawkesOde,
        t,
        mc_runs: None,
    })
}
