//! Model parameters and the row-compressed sparse matrix used for the
//! coupling matrices.
//!
//! Orientation: both `A` and `B` are indexed by receiver. Row `u`, column
//! `v` holds `a_vu` (resp. `b_vu`), the influence of `v`'s messages on
//! user `u`. With this layout `A * y` sums `a_vu * y_v` over the users `u`
//! follows, which is exactly the drift term of the expected-opinion ODE.

use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len()).collect(),
            vals: d.to_vec(),
        }
    }

    /// Builds an `n x n` matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are an error; explicit zeros are kept as structural
    /// entries.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &t {
            if r >= n || c >= n {
                return Err(Error::invalid(format!("matrix entry ({r}, {c}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("matrix entry ({r}, {c}) is not finite")));
            }
        }
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = t.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::invalid(format!("duplicate matrix entry ({}, {})", w[0].0, w[0].1)));
        }
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in &t {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            cols: t.iter().map(|e| e.1).collect(),
            vals: t.iter().map(|e| e.2).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored `(col, value)` pairs of one row, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *yr = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `self * diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for (v, &c) in out.vals.iter_mut().zip(&self.cols) {
            *v *= d[c];
        }
        out
    }

    /// `self + shift * I`, adding structural diagonal entries as needed.
    pub fn add_diagonal(&self, shift: f64) -> Self {
        let diag = (0..self.n).map(|i| (i, i, shift));
        let mut merged: Vec<(usize, usize, f64)> = self.triplets().collect();
        merged.extend(diag);
        merged.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut combined: Vec<(usize, usize, f64)> = Vec::with_capacity(merged.len());
        for e in merged {
            match combined.last_mut() {
                Some(last) if (last.0, last.1) == (e.0, e.1) => last.2 += e.2,
                _ => combined.push(e),
            }
        }
        Self::from_triplets(self.n, combined).expect("valid by construction")
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v))).expect("valid by construction")
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(r, c, v)| r == c || v == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.vals.iter().all(|&v| v == 0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            col[c] += v.abs();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let n = m.nrows();
        let t = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).filter_map(|(r, c)| {
            let v = m[(r, c)];
            (v != 0.0).then_some((r, c, v))
        });
        Self::from_triplets(n, t).expect("dense matrix entries are valid")
    }
}

/// Full parameterization of the opinion and intensity dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Baseline opinions.
    pub alpha: Vec<f64>,
    /// Opinion influence, row `u` col `v` = `a_vu`; support `v in N(u)`.
    pub a: SparseMatrix,
    /// Base posting rates (events per second).
    pub mu: Vec<f64>,
    /// Intensity excitation, row `u` col `v` = `b_vu`; support `v in N(u)` or `v = u`.
    pub b: SparseMatrix,
    /// Opinion kernel decay (1/s).
    pub omega: f64,
    /// Intensity kernel decay (1/s).
    pub nu: f64,
    /// Gaussian sentiment noise scale (standard deviation) per user.
    pub sigma: Vec<f64>,
}

impl ModelParams {
    /// Parameters with no coupling: `A = 0`, `B = 0`.
    pub fn uncoupled(alpha: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64>, omega: f64, nu: f64) -> Self {
        let n = alpha.len();
        Self {
            alpha,
            a: SparseMatrix::zeros(n),
            mu,
            b: SparseMatrix::zeros(n),
            omega,
            nu,
            sigma,
        }
    }

    pub fn n_users(&self) -> usize {
        self.alpha.len()
    }

    /// Checks sign constraints, dimensions and that the sparsity patterns of
    /// `A` and `B` respect the network.
    pub fn validate(&self, network: &Network) -> Result<()> {
        let n = network.n_users();
        let lens = [self.alpha.len(), self.mu.len(), self.sigma.len(), self.a.dim(), self.b.dim()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::invalid(format!(
                "parameter dimensions {lens:?} do not match {n} users"
            )));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid(format!("nu must be > 0, got {}", self.nu)));
        }
        if let Some((u, m)) = self.mu.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::invalid(format!("mu[{u}] = {m} must be finite and >= 0")));
        }
        if let Some((u, s)) = self.sigma.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!("sigma[{u}] = {s} must be finite and > 0")));
        }
        if let Some((u, a)) = self.alpha.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(Error::invalid(format!("alpha[{u}] = {a} is not finite")));
        }
        for (u, v, _) in self.a.triplets() {
            if !network.follows(u, v) {
                return Err(Error::invalid(format!(
                    "A has entry ({u}, {v}) but user {u} does not follow {v}"
                )));
            }
        }
        for (u, v, b) in self.b.triplets() {
            if u != v && !network.follows(u, v) {
                return Err(Error::invalid(format!(
                    "B has entry ({u}, {v}) but user {u} does not follow {v}"
                )));
            }
            if b < 0.0 {
                return Err(Error::invalid(format!("B entry ({u}, {v}) = {b} must be >= 0")));
            }
        }
        Ok(())
    }
}
