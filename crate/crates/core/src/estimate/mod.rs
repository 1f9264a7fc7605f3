//! Maximum-likelihood estimation of model parameters from an event log.
//!
//! The likelihood separates into one least-squares problem for
//! `(alpha_u, a_{. u})` and one convex intensity problem for
//! `(mu_u, b_{. u})` per user, all solved in parallel.

pub mod features;
pub mod intensity;
pub mod opinion;
pub mod spg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{build_features, FeatureTable, UserFeatures};
pub use intensity::hawkes_negloglik_and_grad;
pub use opinion::{estimate_opinion_params, OpinionFit};
pub use spg::{spg_minimize, SpgConfig, SpgOutcome};

use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::network::Network;
use crate::params::{ModelParams, SparseMatrix};
use crate::state::MarkovState;

/// Which intensity family to fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityModel {
    /// Only `mu`; `B` is fixed at zero.
    Poisson,
    #[default]
    Hawkes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub omega: f64,
    pub nu: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub intensity: IntensityModel,
    #[serde(default)]
    pub spg: SpgConfig,
    /// Base rate assigned to users without events.
    #[serde(default = "default_mu_floor")]
    pub mu_floor: f64,
    /// Lower bound on the fitted sentiment noise scale.
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
}

fn default_ridge() -> f64 {
    1e-3
}
fn default_mu_floor() -> f64 {
    1e-9
}
fn default_sigma_floor() -> f64 {
    1e-6
}

impl EstimateConfig {
    pub fn new(omega: f64, nu: f64) -> Self {
        Self {
            omega,
            nu,
            ridge: default_ridge(),
            intensity: IntensityModel::default(),
            spg: SpgConfig::default(),
            mu_floor: default_mu_floor(),
            sigma_floor: default_sigma_floor(),
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_intensity(mut self, model: IntensityModel) -> Self {
        self.intensity = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) || !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!(
                "decay rates must be positive and finite (omega = {}, nu = {})",
                self.omega, self.nu
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge penalty must be >= 0, got {}", self.ridge)));
        }
        if !(self.mu_floor >= 0.0) || !(self.sigma_floor > 0.0) {
            return Err(Error::invalid("mu_floor must be >= 0 and sigma_floor > 0"));
        }
        self.spg.validate()
    }
}

/// Fitted intensity parameters of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFit {
    pub mu: f64,
    /// `(v, b_vu)` over `[u, N(u)...]`; empty in the Poisson model.
    pub excitation: Vec<(usize, f64)>,
    pub solver: SpgOutcome,
}

/// Minimizes the temporal negative log-likelihood of user `u` over
/// `mu >= 0, b >= 0`, starting from the Poisson MLE with no excitation.
pub fn spg_estimate_intensity(features: &FeatureTable, u: usize, config: &EstimateConfig) -> Result<IntensityFit> {
    let f = features.users.get(u).ok_or(Error::UnknownUser {
        user: u,
        n_users: features.users.len(),
    })?;
    let horizon = features.horizon;
    let k = match config.intensity {
        IntensityModel::Poisson => 0,
        IntensityModel::Hawkes => f.excitation_sources.len(),
    };
    let mut x0 = vec![0.0; k + 1];
    x0[0] = f.n_events() as f64 / horizon;
    let solver = spg_minimize(|x, g| hawkes_negloglik_and_grad(x, f, horizon, g), &x0, &config.spg)
        .map_err(|_| Error::NonFiniteObjective { user: u })?;
    if !solver.converged {
        log::debug!(
            "intensity fit of user {u} stopped after {} iterations (projected gradient {:.3e})",
            solver.iterations,
            solver.projected_gradient
        );
    }
    Ok(IntensityFit {
        mu: solver.x[0],
        excitation: f.excitation_sources[..k]
            .iter()
            .copied()
            .zip(solver.x[1..].iter().copied())
            .collect(),
        solver,
    })
}

/// Per-user record of what the fit did.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFit {
    pub user: usize,
    pub n_events: usize,
    pub opinion: Option<OpinionFit>,
    pub intensity: Option<IntensityFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub params: ModelParams,
    pub users: Vec<UserFit>,
}

impl EstimateReport {
    /// Users whose intensity solver hit the iteration cap.
    pub fn unconverged(&self) -> Vec<usize> {
        self.users
            .iter()
            .filter(|u| u.intensity.as_ref().is_some_and(|i| !i.solver.converged))
            .map(|u| u.user)
            .collect()
    }
}

/// Fits all parameters; see [`estimate_all_report`] for diagnostics.
pub fn estimate_all(log: &EventLog, network: &Network, config: &EstimateConfig) -> Result<ModelParams> {
    estimate_all_report(log, network, config).map(|r| r.params)
}

/// Fits all parameters and returns per-user solver diagnostics. If any user
/// fails, the error carries the parameters assembled from the others, with
/// defaults in the failed users' rows.
pub fn estimate_all_report(log: &EventLog, network: &Network, config: &EstimateConfig) -> Result<EstimateReport> {
    config.validate()?;
    let features = build_features(log, network, config.omega, config.nu)?;
    estimate_from_features(&features, config)
}

fn fit_user(features: &FeatureTable, u: usize, config: &EstimateConfig) -> Result<UserFit> {
    let n_events = features.user(u).n_events();
    if n_events == 0 {
        return Ok(UserFit {
            user: u,
            n_events,
            opinion: None,
            intensity: None,
        });
    }
    let opinion = estimate_opinion_params(features, u, config.ridge)?;
    let intensity = spg_estimate_intensity(features, u, config)?;
    Ok(UserFit {
        user: u,
        n_events,
        opinion: Some(opinion),
        intensity: Some(intensity),
    })
}

pub fn estimate_from_features(features: &FeatureTable, config: &EstimateConfig) -> Result<EstimateReport> {
    config.validate()?;
    let n = features.users.len();
    let results: Vec<Result<UserFit>> = (0..n).into_par_iter().map(|u| fit_user(features, u, config)).collect();

    let mut failed = Vec::new();
    let mut first_error = None;
    let users: Vec<UserFit> = results
        .into_iter()
        .enumerate()
        .map(|(u, r)| match r {
            Ok(fit) => fit,
            Err(e) => {
                failed.push(u);
                first_error.get_or_insert(Error::User {
                    user: u,
                    source: Box::new(e),
                });
                UserFit {
                    user: u,
                    n_events: features.user(u).n_events(),
                    opinion: None,
                    intensity: None,
                }
            }
        })
        .collect();

    let params = assemble(&users, features, config)?;
    match first_error {
        None => Ok(EstimateReport { params, users }),
        Some(first) => Err(Error::PartialFit {
            failed,
            first: Box::new(first),
            partial: Box::new(params),
        }),
    }
}

fn assemble(users: &[UserFit], features: &FeatureTable, config: &EstimateConfig) -> Result<ModelParams> {
    let n = users.len();
    let mut alpha = vec![0.0; n];
    let mut mu = vec![config.mu_floor; n];
    let mut sigma = vec![f64::NAN; n];
    let mut a_trip = Vec::new();
    let mut b_trip = Vec::new();
    let (mut sse, mut count) = (0.0, 0usize);

    for fit in users {
        let u = fit.user;
        if let Some(op) = &fit.opinion {
            alpha[u] = op.alpha;
            a_trip.extend(op.influence.iter().filter(|(_, a)| *a != 0.0).map(|&(v, a)| (u, v, a)));
            sigma[u] = op.residual_std.max(config.sigma_floor);
            sse += op.residual_std.powi(2) * fit.n_events as f64;
            count += fit.n_events;
        }
        if let Some(int) = &fit.intensity {
            mu[u] = int.mu.max(config.mu_floor);
            b_trip.extend(int.excitation.iter().filter(|(_, b)| *b > 0.0).map(|&(v, b)| (u, v, b)));
        }
    }
    let pooled = if count > 0 { (sse / count as f64).sqrt() } else { 1.0 };
    for s in &mut sigma {
        if s.is_nan() {
            *s = pooled.max(config.sigma_floor);
        }
    }
    Ok(ModelParams {
        alpha,
        a: SparseMatrix::from_triplets(n, a_trip)?,
        mu,
        b: SparseMatrix::from_triplets(n, b_trip)?,
        omega: features.omega,
        nu: features.nu,
        sigma,
    })
}

/// Scores of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayScore {
    pub value: f64,
    /// Held-out message MSE for `omega`, held-out negative log-likelihood of
    /// posting times for `nu`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySelection {
    pub omega: f64,
    pub nu: f64,
    pub omega_scores: Vec<DecayScore>,
    pub nu_scores: Vec<DecayScore>,
}

/// Picks `omega` and `nu` from candidate lists on a chronological split.
///
/// The opinion fit depends only on `omega` and the intensity fit only on
/// `nu`, so the two are searched independently. `omega` minimizes the
/// held-out message MSE of one-step-ahead opinion predictions; `nu`, which
/// does not enter the message predictions, minimizes the held-out negative
/// log-likelihood of posting times.
pub fn select_decays(
    log: &EventLog,
    network: &Network,
    base: &EstimateConfig,
    omegas: &[f64],
    nus: &[f64],
    train_fraction: f64,
) -> Result<DecaySelection> {
    if omegas.is_empty() || nus.is_empty() {
        return Err(Error::invalid("decay grids must be non-empty"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let (train, test) = log.split_chronological(train_fraction);
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n_train = train.len();

    let omega_scores = omegas
        .iter()
        .map(|&omega| {
            let cfg = EstimateConfig { omega, ..*base };
            cfg.validate()?;
            let features = build_features(&train, network, omega, cfg.nu)?;
            let params = fit_opinions_only(&features, &cfg)?;
            let score = one_step_mse(log.events(), n_train, &params, network)?;
            Ok(DecayScore { value: omega, score })
        })
        .collect::<Result<Vec<_>>>()?;

    let nu_scores = nus
        .iter()
        .map(|&nu| {
            let cfg = EstimateConfig { nu, ..*base };
            cfg.validate()?;
            let train_features = build_features(&train, network, cfg.omega, nu)?;
            let full_features = build_features(log, network, cfg.omega, nu)?;
            let score = (0..network.n_users())
                .into_par_iter()
                .map(|u| {
                    let fit = spg_estimate_intensity(&train_features, u, &cfg)?;
                    let x: Vec<f64> = std::iter::once(fit.mu.max(cfg.mu_floor))
                        .chain(fit.excitation.iter().map(|e| e.1))
                        .collect();
                    let mut g = vec![0.0; x.len()];
                    let full = hawkes_negloglik_and_grad(&x, full_features.user(u), full_features.horizon, &mut g);
                    let part = hawkes_negloglik_and_grad(&x, train_features.user(u), train_features.horizon, &mut g);
                    Ok(full - part)
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .sum();
            Ok(DecayScore { value: nu, score })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = |s: &[DecayScore]| {
        s.iter()
            .filter(|d| d.score.is_finite())
            .min_by(|a, b| a.score.total_cmp(&b.score))
            .map(|d| d.value)
            .unwrap_or(s[0].value)
    };
    Ok(DecaySelection {
        omega: best(&omega_scores),
        nu: best(&nu_scores),
        omega_scores,
        nu_scores,
    })
}

fn fit_opinions_only(features: &FeatureTable, config: &EstimateConfig) -> Result<ModelParams> {
    let n = features.users.len();
    let fits = (0..n)
        .into_par_iter()
        .map(|u| {
            if features.user(u).n_events() == 0 {
                return Ok(None);
            }
            estimate_opinion_params(features, u, config.ridge)
                .map(Some)
                .map_err(|e| Error::User {
                    user: u,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let users: Vec<UserFit> = fits
        .into_iter()
        .enumerate()
        .map(|(u, opinion)| UserFit {
            user: u,
            n_events: features.user(u).n_events(),
            opinion,
            intensity: None,
        })
        .collect();
    assemble(&users, features, config)
}

/// Mean squared error of `x_u(t_j)` against `m_j` over `events[start..]`,
/// with the state built from every earlier event.
fn one_step_mse(events: &[Event], start: usize, params: &ModelParams, network: &Network) -> Result<f64> {
    let mut state = MarkovState::replay(&events[..start], params, network)?;
    let mut sse = 0.0;
    for e in &events[start..] {
        let pred = state.opinion_at(e.u, e.t, params)?;
        sse += (pred - e.m).powi(2);
        state.apply_jump(e, params, network)?;
    }
    Ok(sse / (events.len() - start) as f64)
}
