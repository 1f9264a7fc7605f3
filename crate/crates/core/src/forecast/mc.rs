//! Monte-Carlo forecasting by repeated simulation from the current state.

use rayon::prelude::*;

use super::covariance::{covariance_dynamics, COVARIANCE_CAP};
use super::{default_step, reconstruct_state, ForecastMethod, ForecastResult};
use crate::error::{Error, Result};
use crate::events::EventLog;
use crate::network::Network;
use crate::params::ModelParams;
use crate::sentiment::SentimentModel;
use crate::simulate::{replica_seed, Simulator};
use crate::state::MarkovState;

/// Pilot runs used to plug in the variance when no analytic value exists.
pub const PILOT_RUNS: usize = 50;
const PILOT_SALT: u64 = 0x7069_6c6f_7421;
/// Replicas summed sequentially before chunk results are merged.
const CHUNK: usize = 64;

/// How many simulations to average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McRuns {
    Fixed(usize),
    /// Enough runs for `|estimate - mean| <= eps` with probability at least
    /// `1 - delta`, per [`mc_sample_size`].
    Auto { eps: f64, delta: f64 },
}

/// Runs needed so that the sample mean of opinions with variance at most
/// `sigma2_max` and magnitude at most `x_max` is within `eps` of its
/// expectation with probability `1 - delta`:
/// `ceil((6 sigma2_max + 4 x_max eps) ln(2 / delta) / (3 eps^2))`.
pub fn mc_sample_size(eps: f64, delta: f64, sigma2_max: f64, x_max: f64) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(sigma2_max >= 0.0 && sigma2_max.is_finite()) {
        return Err(Error::invalid(format!("sigma2_max must be >= 0, got {sigma2_max}")));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::invalid(format!("x_max must be > 0, got {x_max}")));
    }
    let bound = (6.0 * sigma2_max + 4.0 * x_max * eps) * (2.0 / delta).ln() / (3.0 * eps * eps);
    Ok((bound.ceil() as usize).max(1))
}

/// Running count, mean and sum of squared deviations.
#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / total;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }

    fn variance(&self) -> Vec<f64> {
        if self.count < 2.0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|m| m / (self.count - 1.0)).collect()
    }
}

/// Simulates replicas `0..runs` from `start` and returns the moments of the
/// latent opinions at `t`. Chunk boundaries are fixed, so the result does
/// not depend on thread scheduling.
fn replicate(sim: &Simulator, start: &MarkovState, params: &ModelParams, t: f64, runs: usize, seed: u64) -> Result<Moments> {
    let n = start.n_users();
    let chunks: Vec<Moments> = (0..runs.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::new(n);
            for i in c * CHUNK..((c + 1) * CHUNK).min(runs) {
                let out = sim.run(start.clone(), t, replica_seed(seed, i as u64), None)?;
                acc.push(&out.state.opinions_at(t, params)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::new(n);
    for c in &chunks {
        total.merge(c);
    }
    Ok(total)
}

/// Averages the latent opinions at `t` over independent continuations of
/// the history before `t0`. Also reports the per-user sample variance.
pub fn forecast_mc(
    log: &EventLog,
    params: &ModelParams,
    network: &Network,
    t0: f64,
    t: f64,
    runs: McRuns,
    seed: u64,
) -> Result<ForecastResult> {
    if !(t > t0) {
        return Err(Error::invalid(format!("target time {t} must exceed the origin {t0}")));
    }
    let sim = Simulator::new(network, params, SentimentModel::Gaussian)?;
    let mut start = MarkovState::replay(log.history_before(t0), params, network)?;
    start.advance_to(t0)?;

    let runs = match runs {
        McRuns::Fixed(0) => return Err(Error::invalid("number of runs must be >= 1")),
        McRuns::Fixed(r) => r,
        McRuns::Auto { eps, delta } => {
            let (sigma2, x_max) = plug_in_bounds(&sim, &start, log, params, network, t0, t, seed)?;
            let r = mc_sample_size(eps, delta, sigma2, x_max.max(f64::MIN_POSITIVE))?;
            log::info!("monte-carlo sample size {r} (sigma2_max {sigma2:.4}, x_max {x_max:.4})");
            r
        }
    };
    let moments = replicate(&sim, &start, params, t, runs, seed)?;
    Ok(ForecastResult {
        variance: Some(moments.variance()),
        mean: moments.mean,
        method: ForecastMethod::MonteCarlo,
        t,
        mc_runs: Some(runs),
    })
}

/// `(sigma2_max, x_max)` for the sample-size bound: from the covariance ODE
/// when intensities are Poisson and the network is small, else from a
/// pilot batch of [`PILOT_RUNS`] simulations.
#[allow(clippy::too_many_arguments)]
fn plug_in_bounds(
    sim: &Simulator,
    start: &MarkovState,
    log: &EventLog,
    params: &ModelParams,
    network: &Network,
    t0: f64,
    t: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if params.b.is_zero() && params.n_users() <= COVARIANCE_CAP {
        let state = reconstruct_state(log, params, network, t0)?;
        let cov = covariance_dynamics(&state, params, t, default_step(params))?;
        let var = cov.variance();
        let sigma2 = var.iter().copied().fold(0.0, f64::max);
        let x_max = cov
            .mean
            .iter()
            .zip(&var)
            .map(|(m, v)| m.abs() + 3.0 * v.max(0.0).sqrt())
            .fold(0.0, f64::max);
        return Ok((sigma2, x_max));
    }
    let pilot = replicate(sim, start, params, t, PILOT_RUNS, seed ^ PILOT_SALT)?;
    let var = pilot.variance();
    let sigma2 = var.iter().copied().fold(0.0, f64::max);
    let x_max = pilot
        .mean
        .iter()
        .zip(&var)
        .map(|(m, v)| m.abs() + 3.0 * v.sqrt())
        .fold(0.0, f64::max);
    Ok((sigma2, x_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SparseMatrix;

    #[test]
    fn sample_size_arithmetic() {
        assert_eq!(mc_sample_size(0.1, 0.05, 1.0, 1.0).unwrap(), 787);
        assert_eq!(mc_sample_size(1.0, 1.0 - 1e-12, 0.0, 1e-9).unwrap(), 1);
        let a = mc_sample_size(0.1, 0.1, 2.0, 1.0).unwrap();
        let b = mc_sample_size(0.2, 0.1, 2.0, 1.0).unwrap();
        assert!(b < a);
        assert!(mc_sample_size(0.0, 0.1, 1.0, 1.0).is_err());
        assert!(mc_sample_size(0.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<[f64; 1]> = (0..10).map(|i| [(i as f64).sin()]).collect();
        let mut all = Moments::new(1);
        xs.iter().for_each(|x| all.push(x));
        let (mut a, mut b) = (Moments::new(1), Moments::new(1));
        xs[..3].iter().for_each(|x| a.push(x));
        xs[3..].iter().for_each(|x| b.push(x));
        a.merge(&b);
        assert!((a.mean[0] - all.mean[0]).abs() < 1e-15);
        assert!((a.variance()[0] - all.variance()[0]).abs() < 1e-14);
    }

    #[test]
    fn decoupled_mean_is_scalar_decay() {
        let g = Network::empty(2).unwrap();
        let p = ModelParams::uncoupled(vec![1.0, -1.0], vec![1.0, 1.0], vec![1.0, 1.0], 1.0, 1.0);
        let log = EventLog::empty(1.0).unwrap();
        let r = forecast_mc(&log, &p, &g, 0.0, 2.0, McRuns::Fixed(1000), 3).unwrap();
        // nothing moves without influence
        assert_eq!(r.mean, p.alpha);
        assert_eq!(r.variance.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn chain_mean_within_three_standard_errors() {
        let g = Network::new(2, [(1, 0)]).unwrap();
        let mut p = ModelParams::uncoupled(vec![0.5, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], 1.0, 1.0);
        p.a = SparseMatrix::from_triplets(2, [(1, 0, 0.5)]).unwrap();
        let log = EventLog::empty(1.0).unwrap();
        let runs = 1000;
        let r = forecast_mc(&log, &p, &g, 0.0, 3.0, McRuns::Fixed(runs), 9).unwrap();
        let want = 0.25 * (1.0 - (-3.0f64).exp());
        let se = (r.variance.as_ref().unwrap()[1] / runs as f64).sqrt();
        assert!((r.mean[1] - want).abs() < 3.0 * se, "{} vs {want} (se {se})", r.mean[1]);
    }

    #[test]
    fn deterministic_under_seed() {
        let g = Network::new(3, [(1, 0), (2, 1), (0, 2)]).unwrap();
        let mut p = ModelParams::uncoupled(vec![0.5, 0.0, -0.3], vec![1.0, 2.0, 0.5], vec![0.5; 3], 1.0, 1.0);
        p.a = SparseMatrix::from_triplets(3, [(1, 0, 0.5), (2, 1, -0.4), (0, 2, 0.3)]).unwrap();
        let log = EventLog::empty(1.0).unwrap();
        let a = forecast_mc(&log, &p, &g, 0.0, 2.0, McRuns::Fixed(200), 42).unwrap();
        let b = forecast_mc(&log, &p, &g, 0.0, 2.0, McRuns::Fixed(200), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_runs_use_the_bound() {
        let g = Network::new(2, [(1, 0)]).unwrap();
        let mut p = ModelParams::uncoupled(vec![0.5, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], 1.0, 1.0);
        p.a = SparseMatrix::from_triplets(2, [(1, 0, 0.5)]).unwrap();
        let log = EventLog::empty(1.0).unwrap();
        let r = forecast_mc(&log, &p, &g, 0.0, 1.0, McRuns::Auto { eps: 0.1, delta: 0.1 }, 1).unwrap();
        assert!(r.mc_runs.unwrap() > 100);
    }
}
