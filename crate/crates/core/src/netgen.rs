//! Synthetic networks and parameters for benchmarks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::params::{ModelParams, SparseMatrix};

pub const ASSORTATIVE: [[f64; 2]; 2] = [[0.96, 0.3], [0.3, 0.96]];
pub const DISSORTATIVE: [[f64; 2]; 2] = [[0.3, 0.96], [0.96, 0.3]];
pub const CORE_PERIPHERY: [[f64; 2]; 2] = [[0.9, 0.5], [0.5, 0.3]];

/// Largest supported Kronecker power; sampling visits all `4^k` pairs.
pub const MAX_KRONECKER_POWER: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KroneckerSpec {
    pub seed_matrix: [[f64; 2]; 2],
    /// Kronecker power; the graph has `2^k` nodes.
    pub k: u32,
    pub rng_seed: u64,
}

impl KroneckerSpec {
    pub fn new(seed_matrix: [[f64; 2]; 2], k: u32, rng_seed: u64) -> Self {
        Self {
            seed_matrix,
            k,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_KRONECKER_POWER {
            return Err(Error::invalid(format!(
                "Kronecker power must be in 1..={MAX_KRONECKER_POWER}, got {}",
                self.k
            )));
        }
        if self.seed_matrix.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!(
                "seed matrix entries must be probabilities, got {:?}",
                self.seed_matrix
            )));
        }
        Ok(())
    }

    /// Probability of the edge `i -> j`: the product over bit levels of the
    /// seed entry indexed by the bits of `i` and `j`.
    pub fn edge_probability(&self, i: usize, j: usize) -> f64 {
        (0..self.k)
            .map(|l| self.seed_matrix[(i >> l) & 1][(j >> l) & 1])
            .product()
    }

    /// `sum_{i != j} p_ij = S^k - (a + d)^k` with `S` the seed sum and
    /// `a, d` its diagonal.
    pub fn expected_edges(&self) -> f64 {
        let s: f64 = self.seed_matrix.iter().flatten().sum();
        let diag = self.seed_matrix[0][0] + self.seed_matrix[1][1];
        s.powi(self.k as i32) - diag.powi(self.k as i32)
    }
}

/// Samples every ordered pair `(i, j)`, `i != j`, independently with its
/// Kronecker probability. An edge means `i` follows `j`. Self-loops are
/// never produced.
pub fn kronecker_graph(spec: &KroneckerSpec) -> Result<Network> {
    spec.validate()?;
    let n = 1usize << spec.k;
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream(i as u64);
            (0..n)
                .filter(move |&j| j != i && rng.random::<f64>() < spec.edge_probability(i, j))
                .map(move |j| (i, j))
                .collect::<Vec<_>>()
        })
        .collect();
    Network::new(n, edges)
}

/// Every user follows `degree` distinct others chosen uniformly.
pub fn random_follow_graph(n: usize, degree: usize, seed: u64) -> Result<Network> {
    if n < 2 || degree >= n {
        return Err(Error::invalid(format!("need 2 <= n and degree < n (n = {n}, degree = {degree})")));
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u as u64);
            sample(&mut rng, n - 1, degree)
                .into_iter()
                .map(move |v| (u, if v >= u { v + 1 } else { v }))
                .collect::<Vec<_>>()
        })
        .collect();
    Network::new(n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDist {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGenSpec {
    pub mu: UniformRange,
    pub b: UniformRange,
    pub alpha: NormalDist,
    pub a: NormalDist,
    pub omega: f64,
    pub nu: f64,
    pub sigma: f64,
    /// Share of users, chosen uniformly, whose intensity is excited by their
    /// own and their followees' posts. The rest are Poisson.
    pub hawkes_fraction: f64,
    /// If set, `B` is scaled down so that every row sum of `B / nu` is at
    /// most this value, which keeps the intensities stationary when < 1.
    pub max_branching_ratio: Option<f64>,
}

impl Default for ParamGenSpec {
    fn default() -> Self {
        Self {
            mu: UniformRange { lo: 0.0, hi: 1.0 },
            b: UniformRange { lo: 0.0, hi: 1.0 },
            alpha: NormalDist { mean: 0.0, std: 1.0 },
            a: NormalDist { mean: 0.0, std: 1.0 },
            omega: 100.0,
            nu: 1.0,
            sigma: 1.0,
            hawkes_fraction: 1.0,
            max_branching_ratio: None,
        }
    }
}

impl ParamGenSpec {
    fn validate(&self) -> Result<()> {
        let ranges_ok = [self.mu, self.b].iter().all(|r| 0.0 <= r.lo && r.lo <= r.hi && r.hi.is_finite());
        let normals_ok = [self.alpha, self.a]
            .iter()
            .all(|d| d.std >= 0.0 && d.std.is_finite() && d.mean.is_finite());
        let rates_ok = self.omega > 0.0 && self.nu > 0.0 && self.sigma > 0.0;
        let frac_ok = (0.0..=1.0).contains(&self.hawkes_fraction);
        let branch_ok = self.max_branching_ratio.is_none_or(|r| r >= 0.0);
        if ranges_ok && normals_ok && rates_ok && frac_ok && branch_ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid parameter generation spec {self:?}")))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: UniformRange) -> f64 {
    if r.hi > r.lo {
        rng.random_range(r.lo..=r.hi)
    } else {
        r.lo
    }
}

/// Draws parameters on the support of `network`: `alpha`, and `A` on the
/// follow edges, from normals; `mu`, and `B` on follow edges plus the
/// diagonal of the Hawkes users, from uniforms.
pub fn gen_params(network: &Network, spec: &ParamGenSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let n = network.n_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha_dist = Normal::new(spec.alpha.mean, spec.alpha.std).map_err(|e| Error::invalid(e.to_string()))?;
    let a_dist = Normal::new(spec.a.mean, spec.a.std).map_err(|e| Error::invalid(e.to_string()))?;

    let alpha: Vec<f64> = (0..n).map(|_| alpha_dist.sample(&mut rng)).collect();
    let mu: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.mu)).collect();
    let mut a_trip = Vec::with_capacity(network.n_edges());
    for u in 0..n {
        for &v in network.followees(u) {
            a_trip.push((u, v, a_dist.sample(&mut rng)));
        }
    }

    let n_hawkes = (spec.hawkes_fraction * n as f64).round() as usize;
    let hawkes_users: Vec<usize> = if n_hawkes == n {
        (0..n).collect()
    } else {
        let mut v = sample(&mut rng, n, n_hawkes).into_vec();
        v.sort_unstable();
        v
    };
    let mut b_trip = Vec::new();
    for &u in &hawkes_users {
        b_trip.push((u, u, uniform(&mut rng, spec.b)));
        for &v in network.followees(u) {
            b_trip.push((u, v, uniform(&mut rng, spec.b)));
        }
    }
    b_trip.sort_by_key(|&(u, v, _)| (u, v));
    b_trip.retain(|&(_, _, b)| b > 0.0);
    let mut b = SparseMatrix::from_triplets(n, b_trip)?;

    if let Some(ratio) = spec.max_branching_ratio {
        let max_row = (0..n)
            .map(|u| b.row(u).map(|(_, x)| x).sum::<f64>() / spec.nu)
            .fold(0.0, f64::max);
        if max_row > ratio {
            b = b.scaled(ratio / max_row);
        }
    }

    Ok(ModelParams {
        alpha,
        a: SparseMatrix::from_triplets(n, a_trip)?,
        mu,
        b,
        omega: spec.omega,
        nu: spec.nu,
        sigma: vec![spec.sigma; n],
    })
}
