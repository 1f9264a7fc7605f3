//! Exponential-kernel state updates.
//!
//! Between events, opinions and intensities relax toward their baselines;
//! at an event they jump. Each user's state is stored with the time it was
//! last touched and decayed lazily on read, so processing an event touches
//! only the poster and its followers.

use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::network::Network;
use crate::params::ModelParams;

/// `alpha + (x_last - alpha) * exp(-omega * dt)`.
pub fn decay_opinion(x_last: f64, alpha: f64, omega: f64, dt: f64) -> Result<f64> {
    relax(x_last, alpha, omega, dt)
}

/// `mu + (lambda_last - mu) * exp(-nu * dt)`.
pub fn decay_intensity(lambda_last: f64, mu: f64, nu: f64, dt: f64) -> Result<f64> {
    relax(lambda_last, mu, nu, dt)
}

#[inline]
fn relax(value: f64, target: f64, rate: f64, dt: f64) -> Result<f64> {
    if dt < 0.0 {
        return Err(Error::NegativeDuration { dt });
    }
    Ok(target + (value - target) * (-rate * dt).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserState {
    pub x: f64,
    pub lambda: f64,
    pub t: f64,
}

/// Per-user `(x*, lambda*, last update time)` plus a global clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovState {
    users: Vec<UserState>,
    t_now: f64,
}

impl MarkovState {
    /// State at `t = 0` with empty history: `x = alpha`, `lambda = mu`.
    pub fn initial(params: &ModelParams) -> Self {
        Self::from_values(&params.alpha, &params.mu, 0.0).expect("matching lengths")
    }

    /// State with every user known exactly at time `t`.
    pub fn from_values(x: &[f64], lambda: &[f64], t: f64) -> Result<Self> {
        if x.len() != lambda.len() {
            return Err(Error::invalid("opinion and intensity vectors differ in length"));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::invalid(format!("intensity {l} must be >= 0")));
        }
        Ok(Self {
            users: x
                .iter()
                .zip(lambda)
                .map(|(&x, &lambda)| UserState { x, lambda, t })
                .collect(),
            t_now: t,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    /// Raw stored entry (not decayed).
    pub fn stored(&self, u: usize) -> &UserState {
        &self.users[u]
    }

    /// Moves the global clock forward without touching any user.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.t_now {
            return Err(Error::NegativeDuration { dt: t - self.t_now });
        }
        self.t_now = t;
        Ok(())
    }

    pub fn opinion_at(&self, u: usize, t: f64, params: &ModelParams) -> Result<f64> {
        let s = self.user(u)?;
        decay_opinion(s.x, params.alpha[u], params.omega, t - s.t)
    }

    pub fn intensity_at(&self, u: usize, t: f64, params: &ModelParams) -> Result<f64> {
        let s = self.user(u)?;
        decay_intensity(s.lambda, params.mu[u], params.nu, t - s.t)
    }

    /// All opinions decayed to `t`.
    pub fn opinions_at(&self, t: f64, params: &ModelParams) -> Result<Vec<f64>> {
        (0..self.n_users()).map(|u| self.opinion_at(u, t, params)).collect()
    }

    pub fn intensities_at(&self, t: f64, params: &ModelParams) -> Result<Vec<f64>> {
        (0..self.n_users()).map(|u| self.intensity_at(u, t, params)).collect()
    }

    /// Brings user `u` up to date at time `t` and returns the new entry.
    pub fn touch(&mut self, u: usize, t: f64, params: &ModelParams) -> Result<&mut UserState> {
        let x = self.opinion_at(u, t, params)?;
        let lambda = self.intensity_at(u, t, params)?;
        let s = &mut self.users[u];
        *s = UserState { x, lambda, t };
        Ok(s)
    }

    /// Applies the jump caused by `event`: every follower `w` of the poster
    /// gets `x_w += a_{u w} m` and `lambda_w += b_{u w}`, and the poster gets
    /// `lambda_u += b_{u u}`. Only touched users are decayed to `event.t`.
    ///
    /// Returns the number of user entries that were touched.
    pub fn apply_jump(&mut self, event: &Event, params: &ModelParams, network: &Network) -> Result<usize> {
        network.check_user(event.u)?;
        self.advance_to(event.t)?;
        let poster = event.u;
        let mut touched = 0;
        for &w in network.followers(poster) {
            let a = params.a.get(w, poster);
            let b = params.b.get(w, poster);
            let s = self.touch(w, event.t, params)?;
            s.x += a * event.m;
            s.lambda += b;
            touched += 1;
        }
        let b_self = params.b.get(poster, poster);
        if b_self != 0.0 {
            self.touch(poster, event.t, params)?.lambda += b_self;
            touched += 1;
        }
        Ok(touched)
    }

    /// Replays a whole history from the initial state.
    pub fn replay(events: &[Event], params: &ModelParams, network: &Network) -> Result<Self> {
        let mut state = Self::initial(params);
        for e in events {
            state.apply_jump(e, params, network)?;
        }
        Ok(state)
    }

    fn user(&self, u: usize) -> Result<&UserState> {
        self.users.get(u).ok_or(Error::UnknownUser {
            user: u,
            n_users: self.users.len(),
        })
    }
}

/// Latent opinion of `u` at `t` evaluated directly from the history:
/// `alpha_u + sum_{v in N(u)} a_vu sum_{t_i < t, u_i = v} m_i exp(-omega (t - t_i))`.
pub fn opinion_from_history(log: &EventLog, params: &ModelParams, network: &Network, u: usize, t: f64) -> Result<f64> {
    network.check_user(u)?;
    if t < 0.0 {
        return Err(Error::NegativeDuration { dt: t });
    }
    let mut x = params.alpha[u];
    for e in log.history_before(t) {
        if e.u != u && network.follows(u, e.u) {
            x += params.a.get(u, e.u) * e.m * (-params.omega * (t - e.t)).exp();
        }
    }
    Ok(x)
}

/// Intensity of `u` at `t` evaluated directly from the history:
/// `mu_u + sum_{v in {u} + N(u)} b_vu sum_{t_i < t, u_i = v} exp(-nu (t - t_i))`.
pub fn intensity_from_history(
    log: &EventLog,
    params: &ModelParams,
    network: &Network,
    u: usize,
    t: f64,
) -> Result<f64> {
    network.check_user(u)?;
    if t < 0.0 {
        return Err(Error::NegativeDuration { dt: t });
    }
    let mut lambda = params.mu[u];
    for e in log.history_before(t) {
        if e.u == u || network.follows(u, e.u) {
            lambda += params.b.get(u, e.u) * (-params.nu * (t - e.t)).exp();
        }
    }
    Ok(lambda)
}
