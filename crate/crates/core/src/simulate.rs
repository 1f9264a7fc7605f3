//! Exact sampling of the coupled marked point process.
//!
//! Each user carries its own pending next-event time, drawn by thinning
//! against its current (decaying) intensity. A binary heap orders the
//! pending times; when a user posts, only the poster and its followers get
//! new samples. Superseded heap entries are skipped on pop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{Event, EventLog};
use crate::network::Network;
use crate::params::ModelParams;
use crate::sentiment::SentimentModel;
use crate::state::MarkovState;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub seed: u64,
    pub sentiment: SentimentModel,
    pub max_events: Option<usize>,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            sentiment: SentimentModel::Gaussian,
            max_events: None,
        }
    }

    pub fn with_max_events(mut self, cap: usize) -> Self {
        self.max_events = Some(cap);
        self
    }

    pub fn with_sentiment(mut self, sentiment: SentimentModel) -> Self {
        self.sentiment = sentiment;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.max_events == Some(0) {
            return Err(Error::invalid("max_events must be > 0"));
        }
        Ok(())
    }
}

/// Next event time after `t` of a user whose intensity is `lambda_now` at
/// `t` and relaxes toward `mu` at rate `nu`, or `None` if no event happens
/// before `horizon`.
///
/// Thinning with a shrinking bound: propose from an exponential clock at
/// rate `bound`, accept with probability `lambda(s) / bound`, otherwise
/// lower the bound to `lambda(s)` and continue from `s`.
pub fn sample_next_event_time<R: Rng + ?Sized>(
    lambda_now: f64,
    mu: f64,
    nu: f64,
    t: f64,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    // lambda only decays toward mu between events, so max(lambda_now, mu)
    // dominates it on [t, inf).
    let mut bound = lambda_now.max(mu);
    let mut s = t;
    while s < horizon {
        if bound <= 0.0 {
            return None;
        }
        let u: f64 = rng.random();
        s -= (1.0 - u).ln() / bound;
        if s >= horizon {
            return None;
        }
        let lambda_s = mu + (lambda_now - mu) * (-nu * (s - t)).exp();
        let d: f64 = rng.random();
        if d * bound < lambda_s {
            return Some(s);
        }
        bound = lambda_s.max(mu);
    }
    None
}

/// Result of a simulation run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: EventLog,
    /// Markov state after the last event (lazily decayed; read with `*_at`).
    pub state: MarkovState,
    /// Number of heap insertions performed after events (resampled users).
    pub queue_updates: usize,
}

/// Precomputed propagation tables for repeated runs on the same model.
pub struct Simulator<'a> {
    params: &'a ModelParams,
    sentiment: SentimentModel,
    /// For each poster: `(follower, a, b)` triples.
    fanout: Vec<Vec<(usize, f64, f64)>>,
    self_excitation: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(network: &Network, params: &'a ModelParams, sentiment: SentimentModel) -> Result<Self> {
        params.validate(network)?;
        let n = network.n_users();
        let fanout = (0..n)
            .map(|v| {
                network
                    .followers(v)
                    .iter()
                    .map(|&w| (w, params.a.get(w, v), params.b.get(w, v)))
                    .collect()
            })
            .collect();
        Ok(Self {
            params,
            sentiment,
            fanout,
            self_excitation: params.b.diagonal(),
        })
    }

    /// Runs from `start` (at `start.t_now()`) until `horizon`.
    pub fn run(&self, start: MarkovState, horizon: f64, seed: u64, max_events: Option<usize>) -> Result<SimOutcome> {
        let n = self.fanout.len();
        if start.n_users() != n {
            return Err(Error::invalid("start state does not match the network size"));
        }
        let t0 = start.t_now();
        if !(horizon > t0) {
            return Err(Error::invalid(format!("horizon {horizon} must exceed start time {t0}")));
        }
        let p = self.params;
        let mut state = start;
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|u| user_stream(seed, u)).collect();
        let mut version = vec![0u64; n];
        let mut heap = BinaryHeap::with_capacity(n);

        for u in 0..n {
            let lambda = state.intensity_at(u, t0, p)?;
            if let Some(t) = sample_next_event_time(lambda, p.mu[u], p.nu, t0, horizon, &mut rngs[u]) {
                heap.push(Pending { t, user: u, version: 0 });
            }
        }

        let mut events = Vec::new();
        let mut queue_updates = 0usize;
        while let Some(next) = heap.pop() {
            let u = next.user;
            if next.version != version[u] {
                continue;
            }
            if let Some(cap) = max_events {
                if events.len() >= cap {
                    let partial = EventLog::new(events, next.t)?;
                    return Err(Error::Truncated {
                        cap,
                        partial: Box::new(partial),
                    });
                }
            }
            let t = next.t;
            state.advance_to(t)?;
            let x_u = state.touch(u, t, p)?.x;
            let m = self.sentiment.sample(x_u, p.sigma[u], &mut rngs[u]);
            events.push(Event { t, u, m });

            for &(w, a, b) in &self.fanout[u] {
                let s = state.touch(w, t, p)?;
                s.x += a * m;
                s.lambda += b;
                let lambda = s.lambda;
                version[w] += 1;
                queue_updates += 1;
                if let Some(tw) = sample_next_event_time(lambda, p.mu[w], p.nu, t, horizon, &mut rngs[w]) {
                    heap.push(Pending {
                        t: tw,
                        user: w,
                        version: version[w],
                    });
                }
            }

            let s = state.touch(u, t, p)?;
            s.lambda += self.self_excitation[u];
            let lambda = s.lambda;
            version[u] += 1;
            queue_updates += 1;
            if let Some(tu) = sample_next_event_time(lambda, p.mu[u], p.nu, t, horizon, &mut rngs[u]) {
                heap.push(Pending {
                    t: tu,
                    user: u,
                    version: version[u],
                });
            }
        }
        state.advance_to(horizon)?;
        Ok(SimOutcome {
            log: EventLog::new(events, horizon)?,
            state,
            queue_updates,
        })
    }
}

/// Simulates the model on `[0, horizon)` from the empty history.
pub fn simulate(network: &Network, params: &ModelParams, config: &SimConfig) -> Result<EventLog> {
    config.validate()?;
    let sim = Simulator::new(network, params, config.sentiment)?;
    Ok(sim
        .run(MarkovState::initial(params), config.horizon, config.seed, config.max_events)?
        .log)
}

/// Independent stream for `(seed, user)`: ChaCha keyed by the master seed
/// with the user id as stream selector.
pub fn user_stream(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// Derives the master seed of replica `index` from a base seed (splitmix64).
pub fn replica_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t: f64,
    user: usize,
    version: u64,
}

// min-heap on (t, user)
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.user.cmp(&self.user))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}
