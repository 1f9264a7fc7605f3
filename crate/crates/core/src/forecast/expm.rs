//! Action of the matrix exponential, `exp(t M) v`, without forming
//! `exp(t M)`.
//!
//! Truncated Taylor series with scaling (Al-Mohy and Higham, 2011): after
//! shifting by `trace(M) / n`, choose a degree `m` and a number of steps `s`
//! so that `s` applications of the degree-`m` Taylor polynomial of
//! `exp(t M / s)` reach double precision, then stop each series early once
//! two consecutive terms are negligible. The 1-norm of the shifted operator
//! stands in for the norms of its powers, which can only overestimate the
//! work.

use crate::error::{Error, Result};
use crate::params::SparseMatrix;

/// A square linear map given by its action.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = M x`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    /// An upper bound on the induced 1-norm.
    fn norm1(&self) -> f64;
    fn trace(&self) -> f64;
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        SparseMatrix::dim(self)
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y)
    }
    fn norm1(&self) -> f64 {
        SparseMatrix::norm1(self)
    }
    fn trace(&self) -> f64 {
        SparseMatrix::trace(self)
    }
}

/// `theta_m` for unit roundoff `2^-53`: the largest `||t M||` for which the
/// degree-`m` truncated Taylor series is accurate to double precision.
const THETA: &[(usize, f64)] = &[
    (1, 2.29e-16),
    (2, 2.58e-8),
    (3, 1.39e-5),
    (4, 3.40e-4),
    (5, 2.40e-3),
    (6, 9.07e-3),
    (7, 2.38e-2),
    (8, 5.00e-2),
    (9, 8.96e-2),
    (10, 1.44e-1),
    (11, 2.14e-1),
    (12, 3.00e-1),
    (13, 4.00e-1),
    (14, 5.14e-1),
    (15, 6.41e-1),
    (16, 7.81e-1),
    (17, 9.31e-1),
    (18, 1.09),
    (19, 1.26),
    (20, 1.44),
    (21, 1.62),
    (22, 1.82),
    (23, 2.01),
    (24, 2.22),
    (25, 2.43),
    (26, 2.64),
    (27, 2.86),
    (28, 3.08),
    (29, 3.31),
    (30, 3.54),
    (35, 4.7),
    (40, 6.0),
    (45, 7.2),
    (50, 8.5),
    (55, 9.9),
];

const UNIT_ROUNDOFF: f64 = 1.1102230246251565e-16;

/// Degree and step count minimizing `m * s` subject to `||tM|| / s <= theta_m`.
fn degree_and_steps(scaled_norm: f64) -> (usize, usize) {
    if scaled_norm == 0.0 {
        return (0, 1);
    }
    THETA
        .iter()
        .map(|&(m, theta)| {
            let s = (scaled_norm / theta).ceil().max(1.0);
            (m, s as usize, m as f64 * s)
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(m, s, _)| (m, s))
        .expect("table is non-empty")
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `exp(t M) v` for a sparse matrix.
pub fn expm_action(m: &SparseMatrix, v: &[f64], t: f64) -> Result<Vec<f64>> {
    expm_action_op(m, v, t)
}

/// `exp(t M) v` for any operator exposing its action, 1-norm and trace.
pub fn expm_action_op<Op: LinearOperator + ?Sized>(op: &Op, v: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = op.dim();
    if v.len() != n {
        return Err(Error::invalid(format!(
            "vector of length {} does not match operator dimension {n}",
            v.len()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("vector has non-finite entries"));
    }
    if n == 0 || t == 0.0 {
        return Ok(v.to_vec());
    }

    let shift = op.trace() / n as f64;
    // ||M - shift I||_1 <= ||M||_1 + |shift|
    let norm = op.norm1() + shift.abs();
    let (m_star, s) = degree_and_steps(t * norm);
    let eta = (t * shift / s as f64).exp();

    let mut f = v.to_vec();
    let mut b = v.to_vec();
    let mut tmp = vec![0.0; n];
    for _ in 0..s {
        let mut c1 = inf_norm(&b);
        for j in 0..m_star {
            let coeff = t / (s as f64 * (j + 1) as f64);
            op.apply_into(&b, &mut tmp);
            for i in 0..n {
                b[i] = coeff * (tmp[i] - shift * b[i]);
                f[i] += b[i];
            }
            let c2 = inf_norm(&b);
            if c1 + c2 <= UNIT_ROUNDOFF * inf_norm(&f) {
                break;
            }
            c1 = c2;
        }
        for x in f.iter_mut() {
            *x *= eta;
        }
        b.copy_from_slice(&f);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn zero_matrix_is_identity() {
        let m = SparseMatrix::zeros(3);
        assert_eq!(expm_action(&m, &[1.0, 2.0, 3.0], 5.0).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_matrix() {
        let m = SparseMatrix::from_diagonal(&[1.0, 2.0]);
        let y = expm_action(&m, &[1.0, 1.0], 1.0).unwrap();
        assert!((y[0] - 1f64.exp()).abs() < 1e-14 * 3.0);
        assert!((y[1] - 2f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn nilpotent() {
        let m = SparseMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        let y = expm_action(&m, &[0.0, 1.0], 1.0).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(expm_action(&SparseMatrix::zeros(2), &[1.0], 1.0).is_err());
        assert!(expm_action(&SparseMatrix::zeros(1), &[1.0], -1.0).is_err());
    }

    #[test]
    fn matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[5usize, 40, 200] {
            let mut trip = Vec::new();
            for i in 0..n {
                trip.push((i, i, -2.0 - rng.random::<f64>()));
                for _ in 0..4 {
                    let j = rng.random_range(0..n);
                    if j != i {
                        trip.push((i, j, rng.random::<f64>() - 0.5));
                    }
                }
            }
            trip.sort_by_key(|&(i, j, _)| (i, j));
            trip.dedup_by_key(|&mut (i, j, _)| (i, j));
            let m = SparseMatrix::from_triplets(n, trip).unwrap();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            for &t in &[0.1, 1.0, 7.5] {
                let dense: DMatrix<f64> = (m.to_dense() * t).exp();
                let reference = dense * DVector::from_column_slice(&v);
                let y = expm_action(&m, &v, t).unwrap();
                let err = rel_err(&y, reference.as_slice());
                assert!(err < 1e-8, "n={n} t={t}: {err}");
            }
        }
    }
}
