//! Influence-operator machinery: the regularized-risk Hessian operator
//! restricted to a finite span, influence functions of the fitted predictor,
//! and the zero-mean Gaussian approximation of `sqrt(n) * (f_n - f)`.
//!
//! Everything lives in coordinates over *representation points* — the
//! deduplicated union of the training points and any extra evaluation
//! points. Both the right-hand sides of interest and the range of the
//! empirical curvature correction lie inside this span, so the restriction
//! is exact rather than an approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_gram, gram_matrix, GramMatrix, KernelSpec, Points};
use crate::law::EmpiricalLaw;
use crate::linalg::{jacobi_eigh, Lu, Mat};
use crate::rng::{rng_for, streams};
use crate::scalar::Real;
use crate::solver::{Dataset, SvmFit};
use crate::tol;

/// The curvature operator `2 lambda I + (1/n) D K` in span coordinates,
/// factorized for repeated solves.
#[derive(Debug, Clone)]
pub struct InfluenceModel<T: Real> {
    fit: SvmFit<T>,
    data: Dataset<T>,
    points: Points<T>,
    gram: GramMatrix<T>,
    kp: Mat<T>,
    lu: Lu<T>,
    /// Representation-point index of each training sample.
    train_slot: Vec<usize>,
    /// First-derivative of the loss at each training sample under the base fit.
    dloss1: Vec<T>,
    /// Accumulated second derivatives per representation point (duplicate
    /// training points contribute additively, matching the empirical mean).
    curvature: Vec<T>,
    /// Base-fit predictions at every representation point.
    base_at: Vec<T>,
}

/// An element of the hypothesis space expressed in its own span: the value at
/// `x` is `sum_j coefficients[j] * k(points[j], x)`.
#[derive(Debug, Clone)]
pub struct InfluenceFunction<T: Real> {
    kernel: KernelSpec<T>,
    points: Points<T>,
    coefficients: Vec<T>,
}

/// Finite-dimensional marginal of the limiting Gaussian process: zero mean
/// and a plug-in covariance over the evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct AsymptoticLaw<T: Real> {
    grid: Points<T>,
    mean: Vec<T>,
    covariance: Vec<Vec<T>>,
}

impl<T: Real> InfluenceModel<T> {
    pub fn fit(&self) -> &SvmFit<T> {
        &self.fit
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn representation_points(&self) -> &Points<T> {
        &self.points
    }

    pub fn training_size(&self) -> usize {
        self.data.n()
    }

    /// Side length of the operator matrix.
    pub fn kp_dim(&self) -> usize {
        self.kp.rows
    }

    /// A row-major copy of the operator matrix.
    pub fn kp_matrix(&self) -> Vec<Vec<T>> {
        (0..self.kp.rows).map(|i| self.kp.row(i).to_vec()).collect()
    }

    /// Applies the operator matrix to a coefficient vector.
    pub fn kp_apply(&self, beta: &[T]) -> Result<Vec<T>> {
        if beta.len() != self.kp.rows {
            return Err(Error::InvalidInput(format!(
                "coefficient vector has length {}, operator dimension is {}",
                beta.len(),
                self.kp.rows
            )));
        }
        let mut out = vec![T::zero(); self.kp.rows];
        self.kp.matvec(beta, &mut out);
        Ok(out)
    }

    /// Solves `kp * beta = rhs` through the stored factorization.
    pub fn kp_solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.kp.rows {
            return Err(Error::InvalidInput(format!(
                "right-hand side has length {}, operator dimension is {}",
                rhs.len(),
                self.kp.rows
            )));
        }
        Ok(self.lu.solve(rhs))
    }

    /// The negated mean-gradient term `(1/n) sum_i L'_i e_{slot(i)}` shared by
    /// every influence right-hand side.
    fn mean_grad(&self) -> Vec<T> {
        let n = T::from_usize(self.data.n()).unwrap();
        let mut g = vec![T::zero(); self.points.n()];
        for (i, &slot) in self.train_slot.iter().enumerate() {
            g[slot] += self.dloss1[i] / n;
        }
        g
    }

    /// Influence function for the sample `z_i` already in the training set.
    fn influence_of_training(&self, i: usize, mean_grad: &[T]) -> Vec<T> {
        let mut rhs: Vec<T> = mean_grad.iter().map(|&v| -v).collect();
        rhs[self.train_slot[i]] += self.dloss1[i];
        let beta = self.lu.solve(&rhs);
        beta.into_iter().map(|v| -v).collect()
    }
}

impl<T: Real> InfluenceFunction<T> {
    pub fn points(&self) -> &Points<T> {
        &self.points
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// Evaluates the function at a single point.
    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        if x.len() != self.points.dim() {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.points.dim()
            )));
        }
        let mut acc = T::zero();
        for (j, p) in self.points.rows().enumerate() {
            acc += self.coefficients[j] * self.kernel.eval_raw(p, x);
        }
        Ok(acc)
    }

    /// Evaluates the function at each grid point.
    pub fn evaluate_on_grid(&self, grid: &Points<T>) -> Result<Vec<T>> {
        let cross = cross_gram(&self.kernel, grid, &self.points)?;
        let mut out = vec![T::zero(); grid.n()];
        cross.matvec(&self.coefficients, &mut out);
        Ok(out)
    }

    /// Norm of the function in the hypothesis space.
    pub fn rkhs_norm(&self) -> Result<T> {
        let gram = gram_matrix(&self.kernel, &self.points)?;
        let sq = crate::kernel::rkhs_norm_sq(&self.coefficients, &gram)?;
        Ok(sq.max(T::zero()).sqrt())
    }
}

impl<T: Real> AsymptoticLaw<T> {
    pub fn grid(&self) -> &Points<T> {
        &self.grid
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<T>] {
        &self.covariance
    }

    /// Diagonal of the covariance (the grid-pointwise asymptotic variances).
    pub fn variances(&self) -> Vec<T> {
        (0..self.grid.n()).map(|j| self.covariance[j][j]).collect()
    }
}

/// Builds the influence model of a converged fit: representation points are
/// the deduplicated union of training and `extra_points`, and the operator
/// matrix is `2 lambda I + (1/n) D K` with per-point curvature `D`.
pub fn build_influence_model<T: Real>(
    fit: SvmFit<T>,
    data: Dataset<T>,
    extra_points: &Points<T>,
) -> Result<InfluenceModel<T>> {
    if fit.support_points() != data.points() {
        return Err(Error::InvalidInput(
            "fit support points do not match the dataset; build the model from the fit's own data"
                .into(),
        ));
    }
    if extra_points.n() > 0 && extra_points.dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "extra points have dimension {}, data has dimension {}",
            extra_points.dim(),
            data.dim()
        )));
    }
    let n = data.n();
    let nf = T::from_usize(n).unwrap();
    let lambda = fit.lambda();

    // Representation points: training points in first-occurrence order, then
    // unseen extra points.
    let mut rep_rows: Vec<Vec<T>> = Vec::new();
    let mut train_slot = Vec::with_capacity(n);
    for x in data.points().rows() {
        match rep_rows.iter().position(|r| r.as_slice() == x) {
            Some(j) => train_slot.push(j),
            None => {
                train_slot.push(rep_rows.len());
                rep_rows.push(x.to_vec());
            }
        }
    }
    for x in extra_points.rows() {
        if !rep_rows.iter().any(|r| r.as_slice() == x) {
            rep_rows.push(x.to_vec());
        }
    }
    let points = Points::new(rep_rows)?;
    let m = points.n();
    let gram = gram_matrix(fit.kernel(), &points)?;

    // Base-fit predictions at every representation point, using the identity
    // k(p_j, x_i) = gram[j][slot(i)].
    let alpha = fit.alpha();
    let mut base_at = vec![T::zero(); m];
    for j in 0..m {
        let row = gram.row(j);
        let mut acc = T::zero();
        for (i, &slot) in train_slot.iter().enumerate() {
            acc += alpha[i] * row[slot];
        }
        base_at[j] = acc;
    }

    // Loss derivatives at the training samples; verify the fit is stationary
    // for this dataset while we are at it.
    let loss = fit.loss().clone();
    let mut dloss1 = Vec::with_capacity(n);
    let mut curvature = vec![T::zero(); m];
    let mut worst = T::zero();
    for i in 0..n {
        let eval = loss.evaluate(data.label(i), base_at[train_slot[i]])?;
        let resid = alpha[i] + eval.d1 / (T::of(2.0) * lambda * nf);
        worst = worst.max(resid.abs());
        dloss1.push(eval.d1);
        curvature[train_slot[i]] += eval.d2;
    }
    if worst.as_f64() > tol::FIXED_POINT_TOL * 10.0 {
        return Err(Error::InvalidInput(format!(
            "fit is not stationary on this dataset (residual {:.3e}); refit before building \
             the influence model",
            worst.as_f64()
        )));
    }

    // kp = 2 lambda I + (1/n) D K over representation points.
    let two_lambda = T::of(2.0) * lambda;
    let mut kp = Mat::zeros(m, m);
    for j in 0..m {
        let scale = curvature[j] / nf;
        let grow = gram.row(j);
        let krow = kp.row_mut(j);
        for k in 0..m {
            krow[k] = scale * grow[k];
        }
        krow[j] += two_lambda;
    }

    let lu = match Lu::factor(&kp) {
        Ok(lu) => lu,
        Err(_) => {
            let mut jittered = kp.clone();
            let jitter = T::of(tol::SOLVE_JITTER);
            for j in 0..m {
                *jittered.at_mut(j, j) += jitter;
            }
            Lu::factor(&jittered).map_err(|_| {
                Error::Numeric(
                    "influence operator is singular even after jitter; \
                     the regularization is too small for this instance"
                        .into(),
                )
            })?
        }
    };

    Ok(InfluenceModel { fit, data, points, gram, kp, lu, train_slot, dloss1, curvature, base_at })
}

/// Influence function of the perturbation `delta_z - P_n` at `z = (x, y)`:
/// the coefficients of `-kp^{-1} [ L'_z Phi(x) - (1/n) sum_i L'_i Phi(x_i) ]`.
///
/// If `x` is not among the representation points the model is rebuilt with it
/// appended (the returned function carries its own basis).
pub fn influence_function<T: Real>(
    model: &InfluenceModel<T>,
    x: &[T],
    y: T,
) -> Result<InfluenceFunction<T>> {
    if x.len() != model.points.dim() {
        return Err(Error::InvalidInput(format!(
            "perturbation point has dimension {}, expected {}",
            x.len(),
            model.points.dim()
        )));
    }
    let Some(j) = model.points.position_of(x) else {
        log::debug!("perturbation point not in span; rebuilding influence model with it appended");
        let extended = model.points.concat(&Points::new(vec![x.to_vec()])?)?;
        let rebuilt = build_influence_model(model.fit.clone(), model.data.clone(), &extended)?;
        return influence_function(&rebuilt, x, y);
    };
    let eval = model.fit.loss().evaluate(y, model.base_at[j])?;
    let mut rhs: Vec<T> = model.mean_grad().into_iter().map(|v| -v).collect();
    rhs[j] += eval.d1;
    let beta = model.lu.solve(&rhs);
    Ok(InfluenceFunction {
        kernel: model.fit.kernel().clone(),
        points: model.points.clone(),
        coefficients: beta.into_iter().map(|v| -v).collect(),
    })
}

/// Plug-in asymptotic law of `sqrt(n) * (f_n - f)` on `grid`: zero mean and
/// covariance `(1/n) sum_i IF(z_i)(grid_j) IF(z_i)(grid_k)`.
///
/// The model must have been built with the grid points appended.
pub fn asymptotic_law<T: Real>(
    model: &InfluenceModel<T>,
    data: &Dataset<T>,
    grid: &Points<T>,
) -> Result<AsymptoticLaw<T>> {
    if data.points() != model.data.points() || data.labels() != model.data.labels() {
        return Err(Error::InvalidInput(
            "dataset does not match the one the influence model was built on".into(),
        ));
    }
    if grid.n() == 0 {
        return Err(Error::InvalidInput("evaluation grid is empty".into()));
    }
    let mut grid_slots = Vec::with_capacity(grid.n());
    for x in grid.rows() {
        let slot = model.points.position_of(x).ok_or_else(|| {
            Error::InvalidInput(
                "grid point missing from the influence span; rebuild the model with the \
                 evaluation grid as extra points"
                    .into(),
            )
        })?;
        grid_slots.push(slot);
    }

    let n = model.data.n();
    let nf = T::from_usize(n).unwrap();
    let g = grid.n();
    let mean_grad = model.mean_grad();
    let mut cov = vec![vec![T::zero(); g]; g];
    let mut values = vec![T::zero(); g];
    for i in 0..n {
        let coeffs = model.influence_of_training(i, &mean_grad);
        for (idx, &slot) in grid_slots.iter().enumerate() {
            values[idx] = crate::linalg::dot(model.gram.row(slot), &coeffs);
        }
        for j in 0..g {
            for k in j..g {
                cov[j][k] += values[j] * values[k] / nf;
            }
        }
    }
    for j in 0..g {
        for k in 0..j {
            cov[j][k] = cov[k][j];
        }
    }
    Ok(AsymptoticLaw { grid: grid.clone(), mean: vec![T::zero(); g], covariance: cov })
}

/// Draws `count` samples from the Gaussian law via a symmetric square root of
/// the covariance. Negative eigenvalues within `1e-8 * trace` are clamped to
/// zero (and logged); anything more negative is an error.
pub fn sample_gaussian<T: Real>(
    law: &AsymptoticLaw<T>,
    count: usize,
    seed: u64,
) -> Result<EmpiricalLaw<T>> {
    if count == 0 {
        return Err(Error::InvalidInput("gaussian sample count must be positive".into()));
    }
    let g = law.grid.n();
    let mut cov = Mat::zeros(g, g);
    for j in 0..g {
        if law.covariance[j].len() != g {
            return Err(Error::InvalidInput("covariance matrix is not square".into()));
        }
        for k in 0..g {
            *cov.at_mut(j, k) = law.covariance[j][k];
        }
    }
    let (evals, evecs) = jacobi_eigh(&cov)?;
    let trace = law.covariance.iter().enumerate().fold(T::zero(), |a, (j, row)| a + row[j]);
    let clamp_floor = -T::of(tol::EIG_CLAMP_REL) * trace.abs();
    let mut roots = Vec::with_capacity(g);
    for &ev in &evals {
        if ev < clamp_floor {
            return Err(Error::Numeric(format!(
                "covariance eigenvalue {:.3e} is negative beyond the clamping tolerance",
                ev.as_f64()
            )));
        }
        if ev < T::zero() {
            log::warn!("clamping negative covariance eigenvalue {:e} to zero", ev.as_f64());
        }
        roots.push(ev.max(T::zero()).sqrt());
    }

    let mut rng = rng_for(seed, streams::GAUSSIAN, 0);
    let normal = rand_distr::StandardNormal;
    let mut rows = Vec::with_capacity(count);
    let mut z = vec![T::zero(); g];
    for _ in 0..count {
        for zj in z.iter_mut() {
            let draw: f64 = rand::Rng::sample(&mut rng, normal);
            *zj = T::of(draw);
        }
        let mut row = law.mean.clone();
        for (k, (&zk, &rk)) in z.iter().zip(roots.iter()).enumerate() {
            let scale = zk * rk;
            if scale != T::zero() {
                for (j, r) in row.iter_mut().enumerate() {
                    *r += evecs.at(j, k) * scale;
                }
            }
        }
        rows.push(row);
    }
    EmpiricalLaw::grid("gaussian", rows)
}

/// Minimum singular value of the influence operator in the geometry of the
/// hypothesis space.
///
/// The operator is self-adjoint and positive there, so its singular values
/// are its eigenvalues; they are computed by whitening the span through the
/// numerically resolved spectrum of the Gram matrix and diagonalizing the
/// quadratic form `2 lambda K + (1/n) K D K`.
pub fn operator_min_singular_value<T: Real>(model: &InfluenceModel<T>) -> Result<T> {
    let m = model.points.n();
    let nf = T::from_usize(model.data.n()).unwrap();
    let two_lambda = T::of(2.0) * model.fit.lambda();

    let mut ktilde = Mat::zeros(m, m);
    for j in 0..m {
        ktilde.row_mut(j).copy_from_slice(model.gram.row(j));
    }
    // A = 2 lambda K + (1/n) K D K, assembled symmetrically.
    let mut dk = Mat::zeros(m, m);
    for j in 0..m {
        let scale = model.curvature[j] / nf;
        let src = model.gram.row(j);
        let dst = dk.row_mut(j);
        for k in 0..m {
            dst[k] = scale * src[k];
        }
    }
    let mut a = ktilde.matmul(&dk);
    for j in 0..m {
        for k in 0..m {
            *a.at_mut(j, k) += two_lambda * ktilde.at(j, k);
        }
    }
    for j in 0..m {
        for k in j + 1..m {
            let s = (a.at(j, k) + a.at(k, j)) / T::of(2.0);
            *a.at_mut(j, k) = s;
            *a.at_mut(k, j) = s;
        }
    }

    let (evals, evecs) = jacobi_eigh(&ktilde)?;
    let max_eval = evals.last().copied().unwrap_or(T::zero());
    if max_eval <= T::zero() {
        return Err(Error::Numeric(
            "Gram matrix has no numerically positive spectrum".into(),
        ));
    }
    let floor = T::of(tol::SPAN_EIG_REL_FLOOR) * max_eval;
    let kept: Vec<usize> = (0..m).filter(|&i| evals[i] > floor).collect();
    let mut w = Mat::zeros(m, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let inv_root = evals[i].sqrt().recip();
        for r in 0..m {
            *w.at_mut(r, c) = evecs.at(r, i) * inv_root;
        }
    }
    let reduced = w.transpose().matmul(&a.matmul(&w));
    let (sigma, _) = jacobi_eigh(&reduced)?;
    sigma
        .first()
        .copied()
        .ok_or_else(|| Error::Numeric("empty reduced spectrum".into()))
}
