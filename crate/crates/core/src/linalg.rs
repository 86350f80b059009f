//! Dense solvers: SPD systems for the ALS normal equations and one-sided
//! Jacobi singular values for the nuclear norm.

use alloc::vec::Vec;

use crate::matrix::{dot, Matrix};
use crate::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = libm::sqrt(d);
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Solves `X · G = B` for X, where `G` is symmetric positive definite.
///
/// Each row of `B` is solved against `G` through its Cholesky factor. If
/// the factorization fails the diagonal jitter is increased tenfold until it
/// succeeds.
pub fn solve_spd_right(b: &Matrix, g: &Matrix) -> Result<Matrix> {
    let n = g.rows();
    if g.cols() != n || b.cols() != n {
        return Err(Error::invalid("solve_spd_right: shape mismatch"));
    }
    let mut jitter = 0.0;
    let l = loop {
        let mut gj = g.clone();
        for i in 0..n {
            gj.set(i, i, gj.get(i, i) + jitter);
        }
        if let Some(l) = cholesky(&gj) {
            break l;
        }
        let scale = (0..n).map(|i| g.get(i, i).abs()).fold(1e-300, f64::max);
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
        if !jitter.is_finite() || jitter > scale * 1e6 {
            return Err(Error::invalid("solve_spd_right: system is not positive definite"));
        }
    };
    let mut x = Matrix::zeros(b.rows(), n);
    let mut y = alloc::vec![0.0; n];
    for r in 0..b.rows() {
        let rhs = b.row(r);
        // forward: L y = rhs
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        // backward: Lᵀ x = y
        let out = x.row_mut(r);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * out[k];
            }
            out[i] = s / l.get(i, i);
        }
    }
    Ok(x)
}

/// Singular values of `a`, sorted descending.
///
/// One-sided (Hestenes) Jacobi: columns of the taller orientation are
/// rotated pairwise until mutually orthogonal; the singular values are then
/// the column norms. Relative accuracy is close to machine precision.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::invalid("singular_values: non-finite entry"));
    }
    // Rows of `cols` are the columns of the tall orientation.
    let mut cols = if a.rows() >= a.cols() {
        a.transpose()
    } else {
        a.clone()
    };
    let n = cols.rows();
    let m = cols.cols();
    const EPS: f64 = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let up = cols.row(p);
                    let uq = cols.row(q);
                    (dot(up, up), dot(uq, uq), dot(up, uq))
                };
                if gamma == 0.0 || gamma.abs() <= EPS * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                let data = cols.data_mut();
                for k in 0..m {
                    let up = data[p * m + k];
                    let uq = data[q * m + k];
                    data[p * m + k] = c * up - s * uq;
                    data[q * m + k] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|i| libm::sqrt(dot(cols.row(i), cols.row(i))))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}
