//! Weighted regularized empirical risk minimization over the kernel span.
//!
//! The minimizer of `R_w(f) = sum_i w_i L(y_i, f(x_i)) + lambda ||f||_H^2`
//! over the RKHS lies in the span of the kernel sections at the sample
//! points, so the problem reduces to coefficients `alpha` with predictions
//! `u = K alpha` and penalty `lambda alpha^T K alpha`. The first-order
//! condition is the fixed-point equation
//! `r_i = w_i L'(y_i, u_i) + 2 lambda alpha_i = 0`, which a damped Newton
//! iteration drives to zero. Each Newton system
//! `(D K + 2 lambda I) s = -r` with `D = diag(w_i L''_i)` is symmetrized to
//! an SPD system and solved by conjugate gradients; points with zero weight
//! are dropped up front (their optimal coefficient is exactly zero) and
//! points with zero curvature are eliminated in closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_gram, gram_matrix, GramMatrix, KernelSpec, Points};
use crate::linalg::{cg_solve, dot, Lu, Mat};
use crate::loss::{LossEval, SmoothLoss};
use crate::scalar::Real;
use crate::tol::{
    ARMIJO_C, CG_MAX_ITER, CG_REL_TOL, COMPACT_GRAM_LIMIT, DENSE_GRAM_LIMIT, FIXED_POINT_STOP,
    KKT_TOL, MAX_BACKTRACK, MAX_NEWTON_ITER, SOLVE_JITTER, WEIGHT_SUM_TOL,
};

// ---------------------------------------------------------------------------
// Dataset and weights
// ---------------------------------------------------------------------------

/// A labeled sample: points with one finite label per point.
///
/// Label admissibility against a particular loss (binary versus real targets)
/// is checked when a fit is requested, since it depends on the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawDataset<T>",
    into = "RawDataset<T>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub struct Dataset<T: Real> {
    points: Points<T>,
    labels: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct RawDataset<T: Real> {
    points: Points<T>,
    labels: Vec<T>,
}

impl<T: Real> TryFrom<RawDataset<T>> for Dataset<T> {
    type Error = Error;
    fn try_from(raw: RawDataset<T>) -> Result<Self> {
        Dataset::new(raw.points, raw.labels)
    }
}

impl<T: Real> From<Dataset<T>> for RawDataset<T> {
    fn from(d: Dataset<T>) -> Self {
        RawDataset { points: d.points, labels: d.labels }
    }
}

impl<T: Real> Dataset<T> {
    pub fn new(points: Points<T>, labels: Vec<T>) -> Result<Self> {
        if points.n() == 0 {
            return Err(Error::InvalidInput("dataset must contain at least one point".into()));
        }
        if labels.len() != points.n() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} points",
                labels.len(),
                points.n()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("non-finite label".into()));
        }
        Ok(Dataset { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &Points<T> {
        &self.points
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> T {
        self.labels[i]
    }

    /// The dataset restricted to `indices` (used by tests and experiments).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset<T>> {
        let mut flat = Vec::with_capacity(indices.len() * self.dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!("subset index {i} out of range")));
            }
            flat.extend_from_slice(self.points.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(Points::from_flat(self.dim(), flat)?, labels)
    }
}

/// Per-point weights for the empirical objective.
///
/// Ordinary samples carry non-negative weights summing to one. The `signed`
/// constructor additionally admits small negative weights; it exists so that
/// two-sided Gateaux difference quotients of the fit map can be formed in
/// tests and diagnostics, and routes the solver to a factorization that does
/// not assume positive curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample<T: Real> {
    weights: Vec<T>,
    signed: bool,
}

impl<T: Real> WeightedSample<T> {
    /// Uniform weights `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("cannot weight an empty sample".into()));
        }
        let w = T::one() / T::from_usize(n).unwrap();
        Ok(WeightedSample { weights: vec![w; n], signed: false })
    }

    /// Non-negative weights summing to one within `WEIGHT_SUM_TOL`.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        Self::check_sum(&weights)?;
        if weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::InvalidInput("negative weight".into()));
        }
        Ok(WeightedSample { weights, signed: false })
    }

    /// Possibly-negative weights summing to one within `WEIGHT_SUM_TOL`.
    pub fn new_signed(weights: Vec<T>) -> Result<Self> {
        Self::check_sum(&weights)?;
        let signed = weights.iter().any(|w| *w < T::zero());
        Ok(WeightedSample { weights, signed })
    }

    fn check_sum(weights: &[T]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite weight".into()));
        }
        let sum = weights.iter().fold(T::zero(), |a, &b| a + b);
        if (sum - T::one()).abs() > T::of(WEIGHT_SUM_TOL) {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }
}

// ---------------------------------------------------------------------------
// Gram storage tiers
// ---------------------------------------------------------------------------

/// Kernel matrix storage, chosen by problem size.
///
/// Small problems keep the full Gram matrix at working precision. Mid-sized
/// problems store entries in `f32` (halving memory) while accumulating all
/// matrix-vector products at working precision; every quantity the solver
/// reports is self-consistent with the stored operator. Beyond that, rows are
/// recomputed on the fly from the kernel.
pub(crate) enum GramStore<T: Real> {
    DenseFull(GramMatrix<T>),
    CompactF32 { n: usize, data: Vec<f32> },
    OnTheFly { spec: KernelSpec<T>, points: Points<T> },
}

impl<T: Real> GramStore<T> {
    pub(crate) fn build(spec: &KernelSpec<T>, points: &Points<T>) -> Result<Self> {
        let n = points.n();
        if n == 0 {
            return Err(Error::InvalidInput("gram store over an empty point set".into()));
        }
        if n <= DENSE_GRAM_LIMIT {
            Ok(GramStore::DenseFull(gram_matrix(spec, points)?))
        } else if n <= COMPACT_GRAM_LIMIT {
            Ok(Self::build_compact(spec, points))
        } else {
            Ok(GramStore::OnTheFly { spec: spec.clone(), points: points.clone() })
        }
    }

    fn build_compact(spec: &KernelSpec<T>, points: &Points<T>) -> Self {
        let n = points.n();
        let mut data = vec![0f32; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let xi = points.row(i);
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = spec.eval_raw(xi, points.row(j)).as_f64() as f32;
            }
        });
        for i in 1..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        GramStore::CompactF32 { n, data }
    }

    #[cfg(test)]
    pub(crate) fn compact_for_tests(spec: &KernelSpec<T>, points: &Points<T>) -> Self {
        Self::build_compact(spec, points)
    }

    pub(crate) fn n(&self) -> usize {
        match self {
            GramStore::DenseFull(g) => g.n(),
            GramStore::CompactF32 { n, .. } => *n,
            GramStore::OnTheFly { points, .. } => points.n(),
        }
    }

    pub(crate) fn at(&self, i: usize, j: usize) -> T {
        match self {
            GramStore::DenseFull(g) => g.at(i, j),
            GramStore::CompactF32 { n, data } => T::of(data[i * n + j] as f64),
            GramStore::OnTheFly { spec, points } => spec.eval_raw(points.row(i), points.row(j)),
        }
    }

    pub(crate) fn matvec(&self, v: &[T], out: &mut [T]) {
        match self {
            GramStore::DenseFull(g) => g.matvec(v, out),
            GramStore::CompactF32 { n, data } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    let row = &data[i * n..(i + 1) * n];
                    // Four-way unrolled accumulation in working precision.
                    let mut a0 = T::zero();
                    let mut a1 = T::zero();
                    let mut a2 = T::zero();
                    let mut a3 = T::zero();
                    let mut chunks = row.chunks_exact(4).zip(v.chunks_exact(4));
                    for (r, x) in &mut chunks {
                        a0 += T::of(r[0] as f64) * x[0];
                        a1 += T::of(r[1] as f64) * x[1];
                        a2 += T::of(r[2] as f64) * x[2];
                        a3 += T::of(r[3] as f64) * x[3];
                    }
                    let rem = row.len() - row.len() % 4;
                    for j in rem..row.len() {
                        a0 += T::of(row[j] as f64) * v[j];
                    }
                    *slot = (a0 + a1) + (a2 + a3);
                }
            }
            GramStore::OnTheFly { spec, points } => {
                // Materialize one row at a time and reuse the shared dot so
                // the summation order (and hence every bit of the result)
                // matches the dense tier.
                let mut row = vec![T::zero(); points.n()];
                for (i, slot) in out.iter_mut().enumerate() {
                    let xi = points.row(i);
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = spec.eval_raw(xi, points.row(j));
                    }
                    *slot = crate::linalg::dot(&row, v);
                }
            }
        }
    }

    /// Dense copy of the principal submatrix indexed by `act`.
    fn sub_gram(&self, act: &[usize]) -> Mat<T> {
        let m = act.len();
        let mut mat = Mat::zeros(m, m);
        match self {
            GramStore::DenseFull(g) => {
                for (a, &i) in act.iter().enumerate() {
                    let row = g.row(i);
                    for (b, &j) in act.iter().enumerate() {
                        mat.data[a * m + b] = row[j];
                    }
                }
            }
            _ => {
                for (a, &i) in act.iter().enumerate() {
                    for (b, &j) in act.iter().enumerate() {
                        mat.data[a * m + b] = self.at(i, j);
                    }
                }
            }
        }
        mat
    }
}

/// The Gram operator restricted to the active (nonzero-weight) points.
enum ActiveOp<'a, T: Real> {
    Full(&'a GramStore<T>),
    Sub(Mat<T>),
}

impl<T: Real> ActiveOp<'_, T> {
    fn matvec(&self, v: &[T], out: &mut [T]) {
        match self {
            ActiveOp::Full(store) => store.matvec(v, out),
            ActiveOp::Sub(mat) => mat.matvec(v, out),
        }
    }

    fn at(&self, i: usize, j: usize) -> T {
        match self {
            ActiveOp::Full(store) => store.at(i, j),
            ActiveOp::Sub(mat) => mat.at(i, j),
        }
    }
}

// ---------------------------------------------------------------------------
// Fit results and options
// ---------------------------------------------------------------------------

/// A fitted kernel expansion `f = sum_j alpha_j k(., x_j)` together with the
/// problem it solves and the solver's exit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    try_from = "RawFit<T>",
    into = "RawFit<T>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub struct SvmFit<T: Real> {
    kernel: KernelSpec<T>,
    loss: SmoothLoss<T>,
    lambda: T,
    support_points: Points<T>,
    alpha: Vec<T>,
    objective: T,
    grad_sup_norm: T,
    fixed_point_residual: T,
    iterations: usize,
    rkhs_norm: T,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct RawFit<T: Real> {
    kernel: KernelSpec<T>,
    loss: SmoothLoss<T>,
    lambda: T,
    support_points: Points<T>,
    alpha: Vec<T>,
    objective: T,
    grad_sup_norm: T,
    fixed_point_residual: T,
    iterations: usize,
    rkhs_norm: T,
}

impl<T: Real> TryFrom<RawFit<T>> for SvmFit<T> {
    type Error = Error;
    fn try_from(raw: RawFit<T>) -> Result<Self> {
        if raw.alpha.len() != raw.support_points.n() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for {} support points",
                raw.alpha.len(),
                raw.support_points.n()
            )));
        }
        if raw.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        if !raw.lambda.is_finite() || raw.lambda <= T::zero() {
            return Err(Error::InvalidConfig("lambda must be finite and positive".into()));
        }
        Ok(SvmFit {
            kernel: raw.kernel,
            loss: raw.loss,
            lambda: raw.lambda,
            support_points: raw.support_points,
            alpha: raw.alpha,
            objective: raw.objective,
            grad_sup_norm: raw.grad_sup_norm,
            fixed_point_residual: raw.fixed_point_residual,
            iterations: raw.iterations,
            rkhs_norm: raw.rkhs_norm,
        })
    }
}

impl<T: Real> From<SvmFit<T>> for RawFit<T> {
    fn from(f: SvmFit<T>) -> Self {
        RawFit {
            kernel: f.kernel,
            loss: f.loss,
            lambda: f.lambda,
            support_points: f.support_points,
            alpha: f.alpha,
            objective: f.objective,
            grad_sup_norm: f.grad_sup_norm,
            fixed_point_residual: f.fixed_point_residual,
            iterations: f.iterations,
            rkhs_norm: f.rkhs_norm,
        }
    }
}

impl<T: Real> SvmFit<T> {
    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn loss(&self) -> &SmoothLoss<T> {
        &self.loss
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn support_points(&self) -> &Points<T> {
        &self.support_points
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// Final weighted objective value.
    pub fn objective(&self) -> T {
        self.objective
    }

    /// Sup norm of the objective gradient at exit.
    pub fn grad_sup_norm(&self) -> T {
        self.grad_sup_norm
    }

    /// Sup-norm distance of `alpha` from the representer fixed point
    /// `-w_i L'_i / (2 lambda)`.
    pub fn fixed_point_residual(&self) -> T {
        self.fixed_point_residual
    }

    /// Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// RKHS norm of the fitted function.
    pub fn rkhs_norm(&self) -> T {
        self.rkhs_norm
    }

    /// Evaluates the fitted function at one point.
    pub fn decision_function(&self, x: &[T]) -> Result<T> {
        if x.len() != self.support_points.dim() {
            return Err(Error::InvalidInput(format!(
                "point of dimension {} against support of dimension {}",
                x.len(),
                self.support_points.dim()
            )));
        }
        let mut acc = T::zero();
        for (j, xj) in self.support_points.rows().enumerate() {
            acc += self.alpha[j] * self.kernel.eval_raw(x, xj);
        }
        Ok(acc)
    }

    /// Evaluates the fitted function at every grid point.
    pub fn evaluate_on_grid(&self, grid: &Points<T>) -> Result<Vec<T>> {
        let cross = cross_gram(&self.kernel, grid, &self.support_points)?;
        let mut out = vec![T::zero(); grid.n()];
        cross.matvec(&self.alpha, &mut out);
        Ok(out)
    }
}

/// Solver controls. Defaults reproduce the documented convergence contract.
#[derive(Debug, Clone)]
pub struct FitOptions<T> {
    /// Maximum Newton steps before giving up with a convergence error.
    pub max_iterations: usize,
    /// Stop threshold on `||r||_inf / (2 lambda)`.
    pub fixed_point_tol: T,
    /// Stop threshold on `||K r||_inf` over the full sample.
    pub grad_tol: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            max_iterations: MAX_NEWTON_ITER,
            fixed_point_tol: T::of(FIXED_POINT_STOP),
            grad_tol: T::of(KKT_TOL),
        }
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Fits the uniformly weighted problem.
pub fn fit<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
) -> Result<SvmFit<T>> {
    let w = WeightedSample::uniform(data.n())?;
    fit_with_options(kernel, loss, lambda, data, &w, &FitOptions::default())
}

/// Fits with explicit per-point weights.
pub fn fit_weighted<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    weights: &WeightedSample<T>,
) -> Result<SvmFit<T>> {
    fit_with_options(kernel, loss, lambda, data, weights, &FitOptions::default())
}

/// Fits with explicit weights and solver controls.
pub fn fit_with_options<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    weights: &WeightedSample<T>,
    opts: &FitOptions<T>,
) -> Result<SvmFit<T>> {
    let store = GramStore::build(kernel, data.points())?;
    fit_with_store(kernel, loss, lambda, data, &store, weights, opts).map(|(fit, _)| fit)
}

/// Like [`fit_with_options`] but also returns the objective value before each
/// Newton step (ending with the converged value), for diagnostics.
pub fn fit_traced<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    weights: &WeightedSample<T>,
    opts: &FitOptions<T>,
) -> Result<(SvmFit<T>, Vec<T>)> {
    let store = GramStore::build(kernel, data.points())?;
    fit_with_store(kernel, loss, lambda, data, &store, weights, opts)
}

/// Core entry point; `store` may be shared across many fits over the same
/// points (bootstrap replicates reuse one Gram matrix read-only).
pub(crate) fn fit_with_store<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    store: &GramStore<T>,
    weights: &WeightedSample<T>,
    opts: &FitOptions<T>,
) -> Result<(SvmFit<T>, Vec<T>)> {
    if !lambda.is_finite() || lambda <= T::zero() {
        return Err(Error::InvalidConfig(format!(
            "lambda must be finite and positive, got {lambda}"
        )));
    }
    if weights.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} points",
            weights.len(),
            data.n()
        )));
    }
    if store.n() != data.n() {
        return Err(Error::InvalidInput("gram store does not match dataset".into()));
    }
    let space = loss.target_space();
    for &y in data.labels() {
        space.validate(y)?;
    }

    let n = data.n();
    let w = weights.weights();
    let act: Vec<usize> = (0..n).filter(|&i| w[i] != T::zero()).collect();
    if act.is_empty() {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    let m = act.len();
    let ya: Vec<T> = act.iter().map(|&i| data.label(i)).collect();
    let wa: Vec<T> = act.iter().map(|&i| w[i]).collect();
    let op = if m == n { ActiveOp::Full(store) } else { ActiveOp::Sub(store.sub_gram(&act)) };

    let two_lambda = T::of(2.0) * lambda;
    let c_solve = two_lambda + T::of(SOLVE_JITTER);
    let armijo_c = T::of(ARMIJO_C);

    let mut alpha = vec![T::zero(); m];
    let mut u = vec![T::zero(); m]; // u = K alpha on the active set
    let mut trace: Vec<T> = Vec::new();

    let mut evals: Vec<LossEval<T>> = Vec::with_capacity(m);
    let mut iter = 0usize;
    loop {
        evals.clear();
        evals.extend(act.iter().enumerate().map(|(a, _)| loss.eval_raw(ya[a], u[a])));
        let value = wa.iter().zip(&evals).fold(T::zero(), |acc, (&wi, e)| acc + wi * e.value);
        let norm_sq = dot(&alpha, &u).max(T::zero());
        let obj = value + lambda * norm_sq;
        if !obj.is_finite() {
            return Err(Error::Numeric("objective became non-finite".into()));
        }
        trace.push(obj);

        let r: Vec<T> = (0..m).map(|a| wa[a] * evals[a].d1 + two_lambda * alpha[a]).collect();
        let r_sup = r.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let fp_res = r_sup / two_lambda;

        if fp_res <= opts.fixed_point_tol {
            // Residual is small in the fixed-point metric; now check the
            // gradient over the full sample (inactive rows included).
            let grad_sup = full_grad_sup(store, n, &act, &r);
            if grad_sup <= opts.grad_tol {
                return Ok((
                    assemble_fit(
                        kernel, loss, lambda, data, &act, &alpha, obj, grad_sup, fp_res, iter,
                        norm_sq,
                    ),
                    trace,
                ));
            }
        }

        if iter >= opts.max_iterations {
            let grad_sup = full_grad_sup(store, n, &act, &r);
            return Err(Error::Convergence {
                iterations: iter,
                objective: obj.as_f64(),
                grad_sup_norm: grad_sup.as_f64(),
                fixed_point_residual: fp_res.as_f64(),
            });
        }

        // Newton direction.
        let d: Vec<T> = (0..m).map(|a| wa[a] * evals[a].d2).collect();
        let mut s = if weights.is_signed() {
            solve_newton_lu(&op, &d, &r, c_solve)?
        } else {
            solve_newton_cg(&op, &d, &r, c_solve)?
        };
        let mut v = vec![T::zero(); m];
        op.matvec(&s, &mut v);
        let mut dd = dot(&r, &v); // directional derivative s . grad = r . (K s)
        if dd > T::zero() {
            // Fall back to the negative residual direction, which always
            // descends (K is positive semi-definite).
            s = r.iter().map(|&ri| -ri).collect();
            op.matvec(&s, &mut v);
            dd = dot(&r, &v);
        }

        // Backtracking line search on the exact objective. The quadratic
        // penalty of the trial point expands exactly:
        // (a + t s)^T (u + t v) = a.u + 2 t s.u + t^2 s.v.
        let su = dot(&s, &u);
        let sv = dot(&s, &v);
        let noise = T::epsilon() * T::of(8.0) * (T::one() + obj.abs());
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            let mut trial_value = T::zero();
            for a in 0..m {
                let t = u[a] + step * v[a];
                trial_value += wa[a] * loss.eval_raw(ya[a], t).value;
            }
            let trial_norm_sq =
                (dot(&alpha, &u) + T::of(2.0) * step * su + step * step * sv).max(T::zero());
            let trial_obj = trial_value + lambda * trial_norm_sq;
            if trial_obj <= obj + armijo_c * step * dd + noise {
                accepted = true;
                break;
            }
            step = step / T::of(2.0);
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations: iter,
                objective: obj.as_f64(),
                grad_sup_norm: full_grad_sup(store, n, &act, &r).as_f64(),
                fixed_point_residual: fp_res.as_f64(),
            });
        }
        for a in 0..m {
            alpha[a] += step * s[a];
            u[a] += step * v[a];
        }
        iter += 1;
    }
}

/// `||K r||_inf` over all `n` rows, with `r` scattered from the active set.
fn full_grad_sup<T: Real>(store: &GramStore<T>, n: usize, act: &[usize], r: &[T]) -> T {
    let mut rf = vec![T::zero(); n];
    for (a, &i) in act.iter().enumerate() {
        rf[i] = r[a];
    }
    let mut out = vec![T::zero(); n];
    store.matvec(&rf, &mut out);
    out.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Solves `(D K + c I) s = -r` via the SPD form
/// `(D^1/2 K D^1/2 + c I) t = D^-1/2 rhs`, `s = D^1/2 t`, with zero-curvature
/// coordinates eliminated in closed form first.
fn solve_newton_cg<T: Real>(op: &ActiveOp<T>, d: &[T], r: &[T], c: T) -> Result<Vec<T>> {
    let m = d.len();
    let pos: Vec<usize> = (0..m).filter(|&a| d[a] > T::zero()).collect();
    let mut s = vec![T::zero(); m];
    // Zero-curvature rows decouple: s_z = -r_z / c.
    for a in 0..m {
        if d[a] <= T::zero() {
            s[a] = -r[a] / c;
        }
    }
    if pos.is_empty() {
        return Ok(s);
    }
    // rhs_p = -r_p - D_p (K s_zero)_p couples the eliminated block back in.
    let mut rhs: Vec<T> = pos.iter().map(|&a| -r[a]).collect();
    if pos.len() < m {
        let mut ks = vec![T::zero(); m];
        op.matvec(&s, &mut ks);
        for (slot, &a) in pos.iter().enumerate() {
            rhs[slot] -= d[a] * ks[a];
        }
    }
    let dsq: Vec<T> = pos.iter().map(|&a| d[a].sqrt()).collect();
    let b: Vec<T> = rhs.iter().zip(&dsq).map(|(&v, &q)| v / q).collect();
    let apply = |t: &[T], out: &mut [T]| {
        let mut x = vec![T::zero(); m];
        for (slot, &a) in pos.iter().enumerate() {
            x[a] = dsq[slot] * t[slot];
        }
        let mut y = vec![T::zero(); m];
        op.matvec(&x, &mut y);
        for (slot, &a) in pos.iter().enumerate() {
            out[slot] = dsq[slot] * y[a] + c * t[slot];
        }
    };
    let t = cg_solve(apply, &b, CG_REL_TOL, CG_MAX_ITER)?;
    for (slot, &a) in pos.iter().enumerate() {
        s[a] = dsq[slot] * t[slot];
    }
    Ok(s)
}

/// Dense LU solve of `(D K + c I) s = -r`, used when weights may be negative
/// and the SPD reduction does not apply.
fn solve_newton_lu<T: Real>(op: &ActiveOp<T>, d: &[T], r: &[T], c: T) -> Result<Vec<T>> {
    let m = d.len();
    let mut mat = Mat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut v = d[i] * op.at(i, j);
            if i == j {
                v += c;
            }
            mat.data[i * m + j] = v;
        }
    }
    let lu = Lu::factor(&mat)?;
    let neg_r: Vec<T> = r.iter().map(|&v| -v).collect();
    Ok(lu.solve(&neg_r))
}

#[allow(clippy::too_many_arguments)]
fn assemble_fit<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    act: &[usize],
    alpha_act: &[T],
    objective: T,
    grad_sup_norm: T,
    fixed_point_residual: T,
    iterations: usize,
    norm_sq: T,
) -> SvmFit<T> {
    let mut alpha = vec![T::zero(); data.n()];
    for (a, &i) in act.iter().enumerate() {
        alpha[i] = alpha_act[a];
    }
    SvmFit {
        kernel: kernel.clone(),
        loss: loss.clone(),
        lambda,
        support_points: data.points().clone(),
        alpha,
        objective,
        grad_sup_norm,
        fixed_point_residual,
        iterations,
        rkhs_norm: norm_sq.max(T::zero()).sqrt(),
    }
}

/// The exact weighted objective of an arbitrary coefficient vector, for
/// diagnostics and tests.
pub fn objective_value<T: Real>(
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    data: &Dataset<T>,
    weights: &WeightedSample<T>,
    alpha: &[T],
) -> Result<T> {
    if alpha.len() != data.n() || weights.len() != data.n() {
        return Err(Error::InvalidInput("coefficient/weight length mismatch".into()));
    }
    let gram = gram_matrix(kernel, data.points())?;
    let mut u = vec![T::zero(); data.n()];
    gram.matvec(alpha, &mut u);
    let mut value = T::zero();
    for i in 0..data.n() {
        value += weights.weights()[i] * loss.evaluate(data.label(i), u[i])?.value;
    }
    Ok(value + lambda * dot(alpha, &u).max(T::zero()))
}
