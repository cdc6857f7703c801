//! Banded solvers for the Helmholtz discretization.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solve a complex tridiagonal system in place (Thomas algorithm).
/// `lower[i]` couples row i to i−1 (lower[0] unused), `upper[i]` row i to i+1.
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &mut [Complex64],
) -> Result<()> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut beta = diag[0];
    if beta.norm() == 0.0 {
        return Err(Error::Numerical("singular tridiagonal system".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta.norm() == 0.0 || !beta.is_finite() {
            return Err(Error::Numerical("singular tridiagonal system".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i] * next;
    }
    Ok(())
}

/// Real 2×2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

fn inv2(m: &Mat2) -> Option<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn mulv(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Block-tridiagonal system with 2×2 diagonal blocks and scalar multiples of
/// the identity off the diagonal. Factor once, solve many right-hand sides.
pub struct BlockTridiagonal {
    // inverse of the pivot blocks and the scaled upper couplings
    inv_pivot: Vec<Mat2>,
    up: Vec<Mat2>,
    lower: Vec<f64>,
}

impl BlockTridiagonal {
    pub fn factor(lower: &[f64], diag: &[Mat2], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut inv_pivot = Vec::with_capacity(n);
        let mut up = Vec::with_capacity(n);
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                // pivot_i = D_i − l_i · up_{i−1}
                let u: &Mat2 = &up[i - 1];
                let l = lower[i];
                pivot = diag[i];
                for r in 0..2 {
                    for c in 0..2 {
                        pivot[r][c] -= l * u[r][c];
                    }
                }
            }
            let inv = inv2(&pivot).ok_or_else(|| Error::Numerical("singular block pivot".into()))?;
            if i + 1 < n {
                let s = upper[i];
                up.push([[inv[0][0] * s, inv[0][1] * s], [inv[1][0] * s, inv[1][1] * s]]);
            }
            inv_pivot.push(inv);
        }
        Ok(BlockTridiagonal { inv_pivot, up, lower: lower.to_vec() })
    }

    pub fn solve(&self, rhs: &mut [[f64; 2]]) {
        let n = rhs.len();
        for i in 0..n {
            let mut r = rhs[i];
            if i > 0 {
                r[0] -= self.lower[i] * rhs[i - 1][0];
                r[1] -= self.lower[i] * rhs[i - 1][1];
            }
            rhs[i] = mulv(&self.inv_pivot[i], r);
        }
        for i in (0..n - 1).rev() {
            let d = mulv(&self.up[i], rhs[i + 1]);
            rhs[i][0] -= d[0];
            rhs[i][1] -= d[1];
        }
    }
}
