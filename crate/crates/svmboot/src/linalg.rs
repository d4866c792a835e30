//! Minimal dense linear algebra used internally.
//!
//! The sizes involved are modest (a few thousand at most for factorizations),
//! so straightforward row-major routines with contiguous inner loops are both
//! fast enough and bitwise deterministic, which the reproducibility contracts
//! rely on.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[cfg(test)]
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = self * v` with a sequential dot product per row.
    pub fn matvec(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `self * other`, naive triple loop with contiguous accumulation.
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + a * *s;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.at_mut(j, i) = self.at(i, j);
            }
        }
        out
    }
}

/// Sequential dot product with a fixed four-way unrolled summation order:
/// deterministic for a given length, and fast enough for the Monte-Carlo
/// workloads that dominate the experiment runtimes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut a0 = T::zero();
    let mut a1 = T::zero();
    let mut a2 = T::zero();
    let mut a3 = T::zero();
    let mut chunks = a.chunks_exact(4).zip(b.chunks_exact(4));
    for (x, y) in &mut chunks {
        a0 = a0 + x[0] * y[0];
        a1 = a1 + x[1] * y[1];
        a2 = a2 + x[2] * y[2];
        a3 = a3 + x[3] * y[3];
    }
    let rem = a.len() - a.len() % 4;
    for j in rem..a.len() {
        a0 = a0 + a[j] * b[j];
    }
    (a0 + a1) + (a2 + a3)
}

/// LU factorization with partial pivoting for general square matrices.
#[derive(Debug, Clone)]
pub(crate) struct Lu<T> {
    lu: Mat<T>,
    piv: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // Pivot search in column k.
            let mut p = k;
            let mut pmax = lu.at(k, k).abs();
            for i in k + 1..n {
                let v = lu.at(i, k).abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::Numeric(format!("lu pivot {k} is zero or non-finite")));
            }
            if p != k {
                piv.swap(k, p);
                for j in 0..n {
                    let tmp = lu.at(k, j);
                    *lu.at_mut(k, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = tmp;
                }
            }
            let pivot = lu.at(k, k);
            for i in k + 1..n {
                let m = lu.at(i, k) / pivot;
                *lu.at_mut(i, k) = m;
                if m != T::zero() {
                    let (upper, lower) = lu.data.split_at_mut(i * n);
                    let row_k = &upper[k * n..(k + 1) * n];
                    let row_i = &mut lower[..n];
                    for j in k + 1..n {
                        row_i[j] = row_i[j] - m * row_k[j];
                    }
                }
            }
        }
        Ok(Lu { lu, piv })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        // L y = P b (unit lower triangle).
        for i in 1..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] = x[i] - s;
        }
        // U x = y.
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.lu.at(i, k) * x[k];
            }
            x[i] = s / self.lu.at(i, i);
        }
        x
    }
}

/// Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues in
/// ascending order with matching eigenvector columns. Intended for the small
/// symmetric problems in this crate (covariances, operator certificates).
pub(crate) fn jacobi_eigh<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::zeros(n, n);
    for i in 0..n {
        *v.at_mut(i, i) = T::one();
    }
    if n <= 1 {
        return Ok((vec![if n == 1 { m.at(0, 0) } else { T::zero() }; n], v));
    }
    let eps = T::of(f64::EPSILON);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        // Off-diagonal Frobenius mass.
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + m.at(i, j) * m.at(i, j);
            }
        }
        let scale = {
            let mut d = T::zero();
            for i in 0..n {
                d = d + m.at(i, i) * m.at(i, i);
            }
            (d + off).max(T::min_positive_value())
        };
        if off <= eps * eps * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.at(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.at(p, p);
                let aqq = m.at(q, q);
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q.
                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    *m.at_mut(k, p) = c * mkp - s * mkq;
                    *m.at_mut(k, q) = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    *m.at_mut(p, k) = c * mpk - s * mqk;
                    *m.at_mut(q, k) = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    *v.at_mut(k, p) = c * vkp - s * vkq;
                    *v.at_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    // Sort ascending by eigenvalue, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| m.at(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let vals: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            *vecs.at_mut(r, new_col) = v.at(r, old_col);
        }
    }
    Ok((vals, vecs))
}

/// Conjugate gradient for symmetric positive-definite systems given as a
/// matrix-vector product. Deterministic: all reductions are sequential.
///
/// Solves `A x = b` to `||A x - b|| <= max(rel_tol * ||b||, abs_floor)`.
pub(crate) fn cg_solve<T, F>(
    apply: F,
    b: &[T],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        return Ok(x);
    }
    let target = T::of(rel_tol) * bnorm;
    let mut rsq = dot(&r, &r);
    if rsq.sqrt() <= target {
        return Ok(x);
    }
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() || !pap.is_finite() {
            return Err(Error::Numeric(
                "conjugate gradient met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rsq / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rsq_new = dot(&r, &r);
        if rsq_new.sqrt() <= target {
            return Ok(x);
        }
        let beta = rsq_new / rsq;
        rsq = rsq_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "conjugate gradient did not reach tolerance in {max_iter} iterations \
         (residual {:e}, target {:e})",
        rsq.sqrt().as_f64(),
        target.as_f64()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Mat<f64> {
        // A = B^T B + I for a fixed B: symmetric positive definite.
        Mat::from_rows(vec![
            vec![4.25, 1.5, 0.75],
            vec![1.5, 3.5, 1.25],
            vec![0.75, 1.25, 2.0],
        ])
    }

    #[test]
    fn lu_solves_general_system() {
        let a = Mat::from_rows(vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.5],
            vec![3.0, 0.25, -2.0],
        ]);
        let lu = Lu::factor(&a).unwrap();
        let x_true: Vec<f64> = vec![0.5, 2.0, -1.5];
        let mut b = vec![0.0; 3];
        a.matvec(&x_true, &mut b);
        let x = lu.solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12f64);
        }
    }

    #[test]
    fn lu_rejects_singular_matrix() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(Lu::factor(&a).is_err());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // diag(1, 3) conjugated by a rotation of pi/6.
        let (c, s) = ((std::f64::consts::PI / 6.0).cos(), (std::f64::consts::PI / 6.0).sin());
        let a = Mat::from_rows(vec![
            vec![c * c + 3.0 * s * s, c * s * (3.0 - 1.0)],
            vec![c * s * (3.0 - 1.0), s * s + 3.0 * c * c],
        ]);
        let (vals, vecs) = jacobi_eigh(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // V diag(vals) V^T reconstructs A.
        for i in 0..2 {
            for j in 0..2 {
                let mut r = 0.0;
                for k in 0..2 {
                    r += vecs.at(i, k) * vals[k] * vecs.at(j, k);
                }
                assert!((r - a.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_handles_diagonal_and_tiny_matrices() {
        let a = Mat::from_rows(vec![vec![2.0]]);
        let (vals, _) = jacobi_eigh(&a).unwrap();
        assert_eq!(vals, vec![2.0]);

        let d = Mat::from_rows(vec![vec![5.0, 0.0], vec![0.0, -1.0]]);
        let (vals, _) = jacobi_eigh(&d).unwrap();
        assert_eq!(vals, vec![-1.0, 5.0]);
    }

    #[test]
    fn cg_matches_lu_on_spd_system() {
        let a = spd3();
        let b = vec![1.0, 0.0, -2.0];
        let x = cg_solve(|v, out| a.matvec(v, out), &b, 1e-14, 100).unwrap();
        let y = Lu::factor(&a).unwrap().solve(&b);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let a = spd3();
        let x = cg_solve(|v, out| a.matvec(v, out), &[0.0; 3], 1e-12, 10).unwrap();
        assert_eq!(x, vec![0.0; 3]);
    }
}
