//! Ridge least squares for `(alpha_u, a_{. u})` under Gaussian sentiments.

use nalgebra::{DMatrix, DVector};

use super::features::FeatureTable;
use crate::error::{Error, Result};

/// Fitted opinion parameters of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionFit {
    pub alpha: f64,
    /// `(v, a_vu)` for each `v in N(u)`.
    pub influence: Vec<(usize, f64)>,
    /// Root-mean-square residual of the fit.
    pub residual_std: f64,
}

/// Solves `(ridge I + X'X) w = X'Y` with `X = [1, g_u]`. The intercept is
/// penalized along with the influence weights.
pub fn estimate_opinion_params(features: &FeatureTable, u: usize, ridge: f64) -> Result<OpinionFit> {
    let f = features.users.get(u).ok_or(Error::UnknownUser {
        user: u,
        n_users: features.users.len(),
    })?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge penalty must be >= 0, got {ridge}")));
    }
    let n = f.n_events();
    if n == 0 {
        return Err(Error::invalid(format!("user {u} has no events to fit")));
    }
    let p = f.neighbors.len() + 1;
    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for j in 0..n {
        row[0] = 1.0;
        row[1..].copy_from_slice(f.opinion_row(j));
        let y = f.targets[j];
        for a in 0..p {
            rhs[a] += row[a] * y;
            for b in a..p {
                normal[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        normal[(a, a)] += ridge;
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }

    let singular = || {
        Error::Singular(format!(
            "normal matrix of user {u} is singular ({n} events, {p} unknowns); use a ridge penalty > 0"
        ))
    };
    let chol = normal.clone().cholesky().ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(singular());
    }
    let w = chol.solve(&rhs);

    let mut sse = 0.0;
    for j in 0..n {
        let pred = w[0] + f.opinion_row(j).iter().zip(w.iter().skip(1)).map(|(g, a)| g * a).sum::<f64>();
        sse += (f.targets[j] - pred).powi(2);
    }
    Ok(OpinionFit {
        alpha: w[0],
        influence: f.neighbors.iter().copied().zip(w.iter().skip(1).copied()).collect(),
        residual_std: (sse / n as f64).sqrt(),
    })
}
