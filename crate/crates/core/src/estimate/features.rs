//! Per-user kernel sums used by both likelihood terms.
//!
//! For every event `j` of user `u` at time `t_j`:
//!
//! * opinion features `g(j, v) = sum_{t_i < t_j, u_i = v} m_i exp(-omega (t_j - t_i))`
//!   for `v in N(u)`;
//! * intensity features `h(j, v) = sum_{t_i < t_j, u_i = v} exp(-nu (t_j - t_i))`
//!   for `v in {u} + N(u)`;
//!
//! plus the compensator integrals `I(v) = sum_{t_i < T, u_i = v} (1 - exp(-nu (T - t_i))) / nu`.
//! Each column is filled by one forward pass over the source user's
//! history with a running decayed sum.

use rayon::prelude::*;

use crate::error::Result;
use crate::events::{Event, EventLog};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub user: usize,
    /// `N(u)`, the columns of the opinion design.
    pub neighbors: Vec<usize>,
    /// `[u, N(u)...]`, the columns of the intensity design.
    pub excitation_sources: Vec<usize>,
    pub times: Vec<f64>,
    /// Observed sentiments of `u`'s events.
    pub targets: Vec<f64>,
    /// Row-major `n_events x neighbors.len()`.
    pub opinion: Vec<f64>,
    /// Row-major `n_events x excitation_sources.len()`.
    pub intensity: Vec<f64>,
    /// One entry per excitation source.
    pub compensator: Vec<f64>,
}

impl UserFeatures {
    pub fn n_events(&self) -> usize {
        self.targets.len()
    }

    pub fn opinion_row(&self, j: usize) -> &[f64] {
        let d = self.neighbors.len();
        &self.opinion[j * d..(j + 1) * d]
    }

    pub fn intensity_row(&self, j: usize) -> &[f64] {
        let d = self.excitation_sources.len();
        &self.intensity[j * d..(j + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub omega: f64,
    pub nu: f64,
    pub horizon: f64,
    pub users: Vec<UserFeatures>,
}

impl FeatureTable {
    pub fn user(&self, u: usize) -> &UserFeatures {
        &self.users[u]
    }
}

pub fn build_features(log: &EventLog, network: &Network, omega: f64, nu: f64) -> Result<FeatureTable> {
    let n = network.n_users();
    let by_user = log.index_by_user(n)?;
    let events = log.events();
    let horizon = log.horizon();
    let histories: Vec<Vec<Event>> = by_user
        .iter()
        .map(|idx| idx.iter().map(|&i| events[i]).collect())
        .collect();

    let users = (0..n)
        .into_par_iter()
        .map(|u| user_features(u, &histories, network, omega, nu, horizon))
        .collect();
    Ok(FeatureTable {
        omega,
        nu,
        horizon,
        users,
    })
}

fn user_features(
    u: usize,
    histories: &[Vec<Event>],
    network: &Network,
    omega: f64,
    nu: f64,
    horizon: f64,
) -> UserFeatures {
    let own = &histories[u];
    let neighbors = network.followees(u).to_vec();
    let mut excitation_sources = Vec::with_capacity(neighbors.len() + 1);
    excitation_sources.push(u);
    excitation_sources.extend_from_slice(&neighbors);

    let n_ev = own.len();
    let d_op = neighbors.len();
    let d_in = excitation_sources.len();
    let mut opinion = vec![0.0; n_ev * d_op];
    let mut intensity = vec![0.0; n_ev * d_in];
    let mut compensator = vec![0.0; d_in];

    for (c, &v) in excitation_sources.iter().enumerate() {
        let source = &histories[v];
        let mut cursor = 0;
        let (mut g_sum, mut h_sum, mut t_last) = (0.0f64, 0.0f64, 0.0f64);
        for (j, e) in own.iter().enumerate() {
            while cursor < source.len() && source[cursor].t < e.t {
                let s = &source[cursor];
                let dt = s.t - t_last;
                g_sum = g_sum * (-omega * dt).exp() + s.m;
                h_sum = h_sum * (-nu * dt).exp() + 1.0;
                t_last = s.t;
                cursor += 1;
            }
            let dt = e.t - t_last;
            intensity[j * d_in + c] = h_sum * (-nu * dt).exp();
            if c > 0 {
                opinion[j * d_op + (c - 1)] = g_sum * (-omega * dt).exp();
            }
        }
        compensator[c] = source
            .iter()
            .map(|s| -(-nu * (horizon - s.t)).exp_m1() / nu)
            .sum();
    }

    UserFeatures {
        user: u,
        neighbors,
        excitation_sources,
        times: own.iter().map(|e| e.t).collect(),
        targets: own.iter().map(|e| e.m).collect(),
        opinion,
        intensity,
        compensator,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    /// O(|H|^2) double sums straight from the definitions.
    fn brute_force(log: &EventLog, g: &Network, omega: f64, nu: f64) -> Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
        let ev = log.events();
        (0..g.n_users())
            .map(|u| {
                let mut cols = vec![u];
                cols.extend_from_slice(g.followees(u));
                let mine: Vec<&Event> = ev.iter().filter(|e| e.u == u).collect();
                let gmat = mine
                    .iter()
                    .map(|ej| {
                        g.followees(u)
                            .iter()
                            .map(|&v| {
                                ev.iter()
                                    .filter(|e| e.u == v && e.t < ej.t)
                                    .map(|e| e.m * (-omega * (ej.t - e.t)).exp())
                                    .sum()
                            })
                            .collect()
                    })
                    .collect();
                let hmat = mine
                    .iter()
                    .map(|ej| {
                        cols.iter()
                            .map(|&v| {
                                ev.iter()
                                    .filter(|e| e.u == v && e.t < ej.t)
                                    .map(|e| (-nu * (ej.t - e.t)).exp())
                                    .sum()
                            })
                            .collect()
                    })
                    .collect();
                let comp = cols
                    .iter()
                    .map(|&v| {
                        ev.iter()
                            .filter(|e| e.u == v)
                            .map(|e| (1.0 - (-nu * (log.horizon() - e.t)).exp()) / nu)
                            .sum()
                    })
                    .collect();
                (gmat, hmat, comp)
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300) || (a - b).abs() < 1e-15
    }

    #[test]
    fn isolated_user_has_no_opinion_columns() {
        let g = Network::empty(1).unwrap();
        let log = EventLog::new(vec![Event::new(0.5, 0, 1.0), Event::new(1.5, 0, 1.0)], 2.0).unwrap();
        let f = build_features(&log, &g, 1.0, 1.0).unwrap();
        let u = f.user(0);
        assert!(u.neighbors.is_empty());
        assert!(u.opinion.is_empty());
        assert_eq!(u.n_events(), 2);
    }

    #[test]
    fn two_kernel_terms() {
        let g = Network::new(2, [(0, 1)]).unwrap();
        let log = EventLog::new(
            vec![Event::new(0.0, 1, 1.0), Event::new(1.0, 1, 1.0), Event::new(2.0, 0, 0.3)],
            3.0,
        )
        .unwrap();
        let f = build_features(&log, &g, LN_2, LN_2).unwrap();
        let u = f.user(0);
        assert!((u.opinion_row(0)[0] - 0.75).abs() < 1e-15);
        assert!((u.intensity_row(0)[1] - 0.75).abs() < 1e-15);
        assert_eq!(u.intensity_row(0)[0], 0.0);
    }

    #[test]
    fn matches_brute_force_on_random_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 12;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random::<f64>() < 0.3 {
                    edges.push((u, v));
                }
            }
        }
        let g = Network::new(n, edges).unwrap();
        let mut t = 0.0;
        let events: Vec<Event> = (0..1000)
            .map(|_| {
                t += rng.random::<f64>() * 0.05 + 1e-6;
                Event::new(t, rng.random_range(0..n), rng.random::<f64>() * 2.0 - 1.0)
            })
            .collect();
        let log = EventLog::new(events, t + 1.0).unwrap();
        let (omega, nu) = (3.0, 0.7);
        let fast = build_features(&log, &g, omega, nu).unwrap();
        let slow = brute_force(&log, &g, omega, nu);
        for (u, (gm, hm, comp)) in slow.iter().enumerate() {
            let f = fast.user(u);
            for j in 0..f.n_events() {
                for (a, b) in f.opinion_row(j).iter().zip(&gm[j]) {
                    assert!(close(*a, *b), "g user {u} event {j}: {a} vs {b}");
                }
                for (a, b) in f.intensity_row(j).iter().zip(&hm[j]) {
                    assert!(close(*a, *b), "h user {u} event {j}: {a} vs {b}");
                }
            }
            for (a, b) in f.compensator.iter().zip(comp) {
                assert!(close(*a, *b));
            }
        }
    }
}
