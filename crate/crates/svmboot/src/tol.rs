//! Central numerical tolerances and iteration limits.
//!
//! Every hard-coded threshold the library relies on lives here, with the
//! reasoning attached, so tests and callers reference one definition.

/// Slack allowed below zero for Gram-matrix eigenvalues. Gram matrices of the
/// supported kernels are positive semidefinite in exact arithmetic; floating
/// point may produce eigenvalues as low as `-PSD_TOL` on clustered inputs.
pub const PSD_TOL: f64 = 1e-9;

/// Diagonal jitter added to matrices inside linear solves (and only there) to
/// keep factorizations well-posed when inputs are numerically singular.
pub const SOLVE_JITTER: f64 = 1e-10;

/// Convergence threshold on the sup-norm of the coefficient-space gradient
/// `K (g_w + 2 lambda alpha)` of the regularized objective.
pub const KKT_TOL: f64 = 1e-8;

/// Contract on the representer fixed point: every converged fit satisfies
/// `max_i |alpha_i + w_i L'_i / (2 lambda)| <= FIXED_POINT_TOL`.
pub const FIXED_POINT_TOL: f64 = 1e-7;

/// Internal stopping target for the fixed-point residual; one order of
/// magnitude below the published contract so the contract holds with margin.
pub const FIXED_POINT_STOP: f64 = 1e-8;

/// Tolerance on `|sum of weights - 1|` for weighted samples.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Newton iteration budget. Exceeding it is a convergence error.
pub const MAX_NEWTON_ITER: usize = 100;

/// Armijo sufficient-decrease constant for the backtracking line search.
pub const ARMIJO_C: f64 = 1e-4;

/// Maximum number of step halvings in the line search.
pub const MAX_BACKTRACK: usize = 60;

/// Relative residual target for the conjugate-gradient inner solver.
pub const CG_REL_TOL: f64 = 1e-12;

/// Conjugate-gradient iteration budget. Exceeding it is a numeric error;
/// well-posed Newton systems here converge in tens of iterations.
pub const CG_MAX_ITER: usize = 5000;

/// Covariance square roots clamp negative eigenvalues to zero; the total
/// clamped magnitude must stay below `EIG_CLAMP_REL * trace`.
pub const EIG_CLAMP_REL: f64 = 1e-8;

/// Bootstrap/Monte-Carlo ensembles tolerate at most this fraction of failed
/// replicates; beyond it the ensemble is an error.
pub const ENSEMBLE_FAILURE_FRACTION: f64 = 0.05;

/// Number of grid points used when certifying loss-derivative envelopes over
/// `t in [-a, a]` (endpoints included; the supported losses attain their
/// envelope at the endpoints, the grid is defense in depth).
pub const ENVELOPE_GRID: usize = 512;

/// Relative eigenvalue floor used when restricting operators to the
/// numerically resolved span of a Gram basis.
pub const SPAN_EIG_REL_FLOOR: f64 = 1e-8;

/// Fits with at most this many points keep the Gram matrix in full scalar
/// precision; larger fits switch to the compact single-precision store.
pub const DENSE_GRAM_LIMIT: usize = 4000;

/// Above this size the Gram matrix is not materialized at all and
/// matrix-vector products re-evaluate the kernel on the fly.
pub const COMPACT_GRAM_LIMIT: usize = 21000;
