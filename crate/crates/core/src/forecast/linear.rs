//! Linear solves: dense LU for small systems, restarted GMRES otherwise.

use nalgebra::DVector;

use super::expm::LinearOperator;
use crate::error::{Error, Result};
use crate::params::SparseMatrix;

/// Systems up to this size are solved densely.
pub const DENSE_LIMIT: usize = 500;
/// Required relative residual `||M x - b|| / ||b||`.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Pivot ratio below which a dense system is treated as singular.
const PIVOT_RATIO: f64 = 1e-13;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual<Op: LinearOperator + ?Sized>(op: &Op, x: &[f64], b: &[f64]) -> f64 {
    let mut r = vec![0.0; b.len()];
    op.apply_into(x, &mut r);
    for (r, b) in r.iter_mut().zip(b) {
        *r = b - *r;
    }
    norm2(&r) / norm2(b).max(f64::MIN_POSITIVE)
}

/// Solves `M x = b`.
pub fn solve_linear(m: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    if b.len() != n {
        return Err(Error::invalid(format!("right-hand side has length {}, expected {n}", b.len())));
    }
    if norm2(b) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if n <= DENSE_LIMIT {
        solve_dense(m, b)
    } else {
        let out = gmres(m, b, None, 50, SOLVE_TOLERANCE, 20 * n.max(100))?;
        Ok(out.x)
    }
}

fn solve_dense(m: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = m.to_dense().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    if !(lo > PIVOT_RATIO * hi) {
        return Err(Error::Singular(format!("pivot ratio {:.3e}", lo / hi)));
    }
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Singular("zero pivot".into()))?;
    let x: Vec<f64> = x.iter().copied().collect();
    let res = relative_residual(m, &x, b);
    if !(res <= SOLVE_TOLERANCE) {
        return Err(Error::NotConverged {
            method: "dense LU",
            iterations: 1,
            residual: res,
        });
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres<Op: LinearOperator + ?Sized>(
    op: &Op,
    b: &[f64],
    x0: Option<&[f64]>,
    restart: usize,
    tol: f64,
    max_iters: usize,
) -> Result<GmresOutcome> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::invalid(format!("right-hand side has length {}, expected {n}", b.len())));
    }
    let b_norm = norm2(b);
    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let restart = restart.clamp(1, n.max(1));
    let mut iterations = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];

    loop {
        op.apply_into(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        let mut residual = beta / b_norm;
        if residual <= tol {
            return Ok(GmresOutcome { x, iterations, residual });
        }
        if iterations >= max_iters {
            return Err(Error::NotConverged {
                method: "GMRES",
                iterations,
                residual,
            });
        }

        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, rotated in place into upper-triangular form
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<f64> = Vec::with_capacity(restart);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;

        let mut k = 0;
        while k < restart && iterations < max_iters {
            op.apply_into(&basis[k], &mut w);
            let mut col = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hj: f64 = w.iter().zip(vj).map(|(a, b)| a * b).sum();
                col[j] = hj;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hj * vi;
                }
            }
            let h_next = norm2(&w);
            col[k + 1] = h_next;

            for j in 0..k {
                let (c, s) = (cs[j], sn[j]);
                let (a, b) = (col[j], col[j + 1]);
                col[j] = c * a + s * b;
                col[j + 1] = -s * a + c * b;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);

            iterations += 1;
            k += 1;
            residual = g[k].abs() / b_norm;
            if residual <= tol || h_next <= 1e-300 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[j][i] * y[j];
            }
            if h[i][i] == 0.0 {
                return Err(Error::Singular("GMRES breakdown on a singular system".into()));
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("GMRES produced non-finite iterates".into()));
        }
    }
}
