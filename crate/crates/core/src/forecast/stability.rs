//! Steady states and spectral stability checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expm::{expm_action_op, LinearOperator};
use super::linear::solve_linear;
use crate::error::{Error, Result};
use crate::params::{ModelParams, SparseMatrix};

/// Dense eigenvalues are computed up to this dimension; above it the
/// spectral abscissa is estimated from the growth of `exp(tM) v`.
pub const DENSE_EIGEN_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Poisson,
    Hawkes,
    Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub regime: Regime,
    /// Largest real part of the relevant spectrum.
    pub statistic: f64,
    pub threshold: f64,
    pub stable: bool,
    /// Fixed point of the mean opinion, when stable.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steady_state: Option<Vec<f64>>,
    /// Long-run posting rates used in the check.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rates: Vec<f64>,
}

/// Largest real part among the eigenvalues of a dense matrix.
pub fn dense_spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Estimate of the spectral abscissa from the long-run growth rate of
/// `exp(tau M)^k v` for a fixed pseudo-random start `v`.
pub fn growth_rate_estimate<Op: LinearOperator + ?Sized>(op: &Op) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let shift = op.trace() / n as f64;
    let tau = 4.0 / (op.norm1() + shift.abs()).max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let (iters, tail) = (300, 100);
    let mut log_growth = 0.0;
    for k in 0..iters {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Singular("growth estimate collapsed".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let w = expm_action_op(op, &v, tau)?;
        if k >= iters - tail {
            log_growth += w.iter().map(|x| x * x).sum::<f64>().sqrt().ln();
        }
        v = w;
    }
    Ok(log_growth / (tail as f64 * tau))
}

/// Largest real part among the eigenvalues of a sparse matrix, exact up to
/// [`DENSE_EIGEN_LIMIT`] and estimated above.
pub fn spectral_abscissa(m: &SparseMatrix) -> Result<f64> {
    if m.dim() <= DENSE_EIGEN_LIMIT {
        Ok(dense_spectral_abscissa(&m.to_dense()))
    } else {
        growth_rate_estimate(m)
    }
}

/// Stability of the mean-opinion dynamics and, when stable, its fixed point
/// `(I - A diag(r) / omega)^{-1} alpha`.
///
/// In the Poisson regime `r = mu`. In the Hawkes regime (diagonal `B`) `r`
/// is the long-run rate `mu_u / (1 - b_uu / nu)`, which requires
/// `b_uu < nu`. The test is `max Re eig(A diag(r)) < omega`.
pub fn steady_state(params: &ModelParams, regime: Regime) -> Result<StabilityReport> {
    let rates = match regime {
        Regime::Poisson => params.mu.clone(),
        Regime::Hawkes => stationary_rates(params)?,
        Regime::Covariance => return super::covariance::covariance_stability(params),
    };
    let coupling = params.a.scale_columns(&rates);
    let statistic = spectral_abscissa(&coupling)?;
    let stable = statistic < params.omega;
    let steady = if stable {
        let system = coupling.scaled(-1.0 / params.omega).add_diagonal(1.0);
        Some(solve_linear(&system, &params.alpha)?)
    } else {
        None
    };
    Ok(StabilityReport {
        regime,
        statistic,
        threshold: params.omega,
        stable,
        steady_state: steady,
        rates,
    })
}

/// `mu_u / (1 - b_uu / nu)` for a diagonal `B`.
pub fn stationary_rates(params: &ModelParams) -> Result<Vec<f64>> {
    if !params.b.is_diagonal() {
        return Err(Error::NonDiagonalExcitation);
    }
    let nu = params.nu;
    params
        .b
        .diagonal()
        .iter()
        .zip(&params.mu)
        .enumerate()
        .map(|(user, (&b, &mu))| {
            if b >= nu {
                Err(Error::Nonstationary { user, b, nu })
            } else {
                Ok(mu / (1.0 - b / nu))
            }
        })
        .collect()
}
