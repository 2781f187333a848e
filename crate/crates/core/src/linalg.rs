//! Small dense linear algebra: row-major matrices, Cholesky factorization,
//! a cyclic Jacobi eigensolver, and conjugate gradients on operator form.
//!
//! The systems solved here are tiny (at most a few thousand unknowns), so
//! simple O(n^3) routines with predictable numerics beat a heavyweight
//! dependency.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn mul_vec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (c, a) in row.iter().enumerate() {
                y[c] += a * xr;
            }
        }
        y
    }

    /// Largest absolute asymmetry |A - A^T| over the matrix.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// In-place lower Cholesky factorization; `None` when a pivot is not positive.
fn cholesky(a: &Mat) -> Option<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.rows, a.cols);
    let mut l = a.data.clone();
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            let v = l[j * n + k];
            d -= v * v;
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut v = l[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / dj;
        }
    }
    Some(l)
}

/// Solves `A x = b` for symmetric positive definite `A`; `None` when the
/// factorization hits a non-positive pivot.
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(b.len(), n);
    let l = cholesky(a)?;
    // forward substitution L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= l[i * n + k] * y[k];
        }
        y[i] = v / l[i * n + i];
    }
    // back substitution L^T x = y
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[k * n + i] * y[k];
        }
        y[i] = v / l[i * n + i];
    }
    Some(y)
}

/// All eigenvalues of a symmetric matrix via cyclic Jacobi, ascending order.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.rows;
    debug_assert_eq!(a.rows, a.cols);
    let mut m = a.data.clone();
    let idx = |r: usize, c: usize| r * n + c;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += m[idx(r, c)] * m[idx(r, c)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[idx(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[idx(k, p)];
                    let akq = m[idx(k, q)];
                    m[idx(k, p)] = c * akp - s * akq;
                    m[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[idx(p, k)];
                    let aqk = m[idx(q, k)];
                    m[idx(p, k)] = c * apk - s * aqk;
                    m[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[idx(i, i)]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Spectral condition number estimate of a symmetric positive semidefinite matrix.
pub fn spd_condition(a: &Mat) -> f64 {
    let ev = sym_eigenvalues(a);
    let hi = *ev.last().unwrap_or(&0.0);
    let lo = ev.first().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Conjugate gradients for `A x = b` with `A` given as a callback.
/// Iterates until the relative residual drops below `tol`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let denom = dot(&p, &ap);
        if denom <= 0.0 || !denom.is_finite() {
            return Err(Error::Singular {
                cond_estimate: f64::INFINITY,
            });
        }
        let alpha = rs / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    if rs.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Singular {
            cond_estimate: f64::INFINITY,
        })
    }
}
