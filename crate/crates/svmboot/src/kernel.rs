//! Positive-definite kernels, point collections, and Gram matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::scalar::Real;

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

/// A collection of points in `R^dim`, stored row-major.
///
/// Serialized as a plain list of coordinate lists. All coordinates are
/// validated to be finite at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<Vec<T>>",
    into = "Vec<Vec<T>>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub struct Points<T: Real> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Points<T> {
    /// Builds a point collection from coordinate rows. Rows must share one
    /// dimension (at least 1 when any row is present) and be finite.
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && dim == 0 {
            return Err(Error::InvalidInput("points must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "point {i} has dimension {} but expected {dim}",
                    row.len()
                )));
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "point {i} has a non-finite coordinate"
                    )));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Points { dim, data })
    }

    /// Builds from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::InvalidInput("points must have dimension >= 1".into()));
        }
        if dim > 0 && data.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "flat buffer of length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Points { dim, data })
    }

    /// An empty collection with a declared dimension.
    pub fn empty(dim: usize) -> Self {
        Points { dim, data: Vec::new() }
    }

    /// One-dimensional points from scalars (the common harness case).
    pub fn from_scalars(xs: &[T]) -> Self {
        Points { dim: 1, data: xs.to_vec() }
    }

    pub fn n(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Concatenates `other` after `self` (dimensions must match).
    pub fn concat(&self, other: &Points<T>) -> Result<Points<T>> {
        if other.n() > 0 && self.n() > 0 && other.dim != self.dim {
            return Err(Error::InvalidInput(format!(
                "cannot concatenate points of dim {} and {}",
                self.dim, other.dim
            )));
        }
        let dim = if self.n() > 0 { self.dim } else { other.dim };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Points { dim, data })
    }

    /// Index of the first row exactly equal to `row`, if any.
    pub fn position_of(&self, row: &[T]) -> Option<usize> {
        if row.len() != self.dim {
            return None;
        }
        self.rows().position(|r| r == row)
    }
}

impl<T: Real> TryFrom<Vec<Vec<T>>> for Points<T> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Points::new(rows)
    }
}

impl<T: Real> From<Points<T>> for Vec<Vec<T>> {
    fn from(p: Points<T>) -> Self {
        p.rows().map(|r| r.to_vec()).collect()
    }
}

// ---------------------------------------------------------------------------
// Kernel specifications
// ---------------------------------------------------------------------------

/// Supported positive-definite kernel families.
///
/// Parameters are validated at construction (and on deserialization), not at
/// each evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawKernelSpec<T>",
    into = "RawKernelSpec<T>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub enum KernelSpec<T: Real> {
    /// `k(x, x') = exp(-gamma * ||x - x'||^2)`, `gamma > 0`.
    GaussianRbf { gamma: T },
    /// `k(x, x') = (<x, x'> + offset)^degree`, `degree >= 1`, `offset >= 0`.
    Polynomial { degree: u32, offset: T },
    /// `k(x, x') = <x, x'>`.
    Linear,
}

#[derive(Serialize, Deserialize)]
#[serde(
    tag = "family",
    rename_all = "snake_case",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
enum RawKernelSpec<T> {
    GaussianRbf { gamma: T },
    Polynomial { degree: u32, offset: T },
    Linear,
}

impl<T: Real> TryFrom<RawKernelSpec<T>> for KernelSpec<T> {
    type Error = Error;
    fn try_from(raw: RawKernelSpec<T>) -> Result<Self> {
        match raw {
            RawKernelSpec::GaussianRbf { gamma } => KernelSpec::gaussian_rbf(gamma),
            RawKernelSpec::Polynomial { degree, offset } => KernelSpec::polynomial(degree, offset),
            RawKernelSpec::Linear => Ok(KernelSpec::Linear),
        }
    }
}

impl<T: Real> From<KernelSpec<T>> for RawKernelSpec<T> {
    fn from(k: KernelSpec<T>) -> Self {
        match k {
            KernelSpec::GaussianRbf { gamma } => RawKernelSpec::GaussianRbf { gamma },
            KernelSpec::Polynomial { degree, offset } => RawKernelSpec::Polynomial { degree, offset },
            KernelSpec::Linear => RawKernelSpec::Linear,
        }
    }
}

impl<T: Real> KernelSpec<T> {
    /// Gaussian RBF kernel; `gamma` must be finite and positive.
    pub fn gaussian_rbf(gamma: T) -> Result<Self> {
        if !gamma.is_finite() || gamma <= T::zero() {
            return Err(Error::InvalidConfig(format!(
                "gaussian_rbf gamma must be finite and positive, got {gamma}"
            )));
        }
        Ok(KernelSpec::GaussianRbf { gamma })
    }

    /// Polynomial kernel; `degree >= 1`, `offset` finite and non-negative.
    pub fn polynomial(degree: u32, offset: T) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidConfig("polynomial degree must be >= 1".into()));
        }
        if !offset.is_finite() || offset < T::zero() {
            return Err(Error::InvalidConfig(format!(
                "polynomial offset must be finite and non-negative, got {offset}"
            )));
        }
        Ok(KernelSpec::Polynomial { degree, offset })
    }

    /// Linear kernel.
    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    #[inline]
    pub(crate) fn eval_raw(&self, x: &[T], y: &[T]) -> T {
        match *self {
            KernelSpec::GaussianRbf { gamma } => {
                let mut sq = T::zero();
                for (a, b) in x.iter().zip(y) {
                    let d = *a - *b;
                    sq = sq + d * d;
                }
                (-gamma * sq).exp()
            }
            KernelSpec::Polynomial { degree, offset } => {
                (dot(x, y) + offset).powi(degree as i32)
            }
            KernelSpec::Linear => dot(x, y),
        }
    }
}

/// Evaluates `k(x, y)`; the two points must share a dimension.
pub fn eval_kernel<T: Real>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.eval_raw(x, y))
}

// ---------------------------------------------------------------------------
// Gram matrices
// ---------------------------------------------------------------------------

/// Dense symmetric kernel Gram matrix `K[i][j] = k(x_i, x_j)`.
///
/// Rows are assembled in parallel with a fixed per-row summation order and the
/// lower triangle is mirrored from the upper one, so the result is exactly
/// symmetric and bitwise reproducible for a fixed input.
#[derive(Debug, Clone)]
pub struct GramMatrix<T: Real> {
    pub(crate) mat: Mat<T>,
}

impl<T: Real> GramMatrix<T> {
    pub fn n(&self) -> usize {
        self.mat.rows
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.mat.at(i, j)
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.mat.row(i)
    }

    /// `out = K v` with sequential per-row dot products.
    pub fn matvec(&self, v: &[T], out: &mut [T]) {
        self.mat.matvec(v, out);
    }
}

/// Builds the Gram matrix of `points` under `spec`. Requires at least one
/// point.
pub fn gram_matrix<T: Real>(spec: &KernelSpec<T>, points: &Points<T>) -> Result<GramMatrix<T>> {
    let n = points.n();
    if n == 0 {
        return Err(Error::InvalidInput("gram matrix of an empty point set".into()));
    }
    let mut mat = Mat::zeros(n, n);
    // Upper triangle in parallel (row-disjoint writes), then mirror.
    mat.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = points.row(i);
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = spec.eval_raw(xi, points.row(j));
            }
        });
    for i in 1..n {
        for j in 0..i {
            mat.data[i * n + j] = mat.data[j * n + i];
        }
    }
    Ok(GramMatrix { mat })
}

/// Rectangular kernel matrix `C[i][j] = k(a_i, b_j)`.
pub(crate) fn cross_gram<T: Real>(
    spec: &KernelSpec<T>,
    a: &Points<T>,
    b: &Points<T>,
) -> Result<Mat<T>> {
    if a.n() > 0 && b.n() > 0 && a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "cross gram between dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut mat = Mat::zeros(a.n(), b.n());
    for i in 0..a.n() {
        let xi = a.row(i);
        let row = &mut mat.data[i * b.n()..(i + 1) * b.n()];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = spec.eval_raw(xi, b.row(j));
        }
    }
    Ok(mat)
}

/// Squared RKHS norm `alpha^T K alpha` of the expansion with coefficients
/// `alpha` over the points of `gram`.
///
/// The value is mathematically non-negative; floating point may return values
/// as low as `-PSD_TOL`. Objective computations clamp it at zero.
pub fn rkhs_norm_sq<T: Real>(alpha: &[T], gram: &GramMatrix<T>) -> Result<T> {
    if alpha.len() != gram.n() {
        return Err(Error::InvalidInput(format!(
            "coefficient length {} does not match gram size {}",
            alpha.len(),
            gram.n()
        )));
    }
    let mut kalpha = vec![T::zero(); alpha.len()];
    gram.matvec(alpha, &mut kalpha);
    Ok(dot(alpha, &kalpha))
}
