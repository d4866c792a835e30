//! Kernel-regularized empirical risk minimization with smooth convex losses,
//! Efron-bootstrap resampling of the fitted function, and a first-order
//! (influence-function) Gaussian approximation of its sampling law.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`kernel`] — positive-definite kernels and Gram matrices;
//! * [`loss`] — smooth convex losses with first and second derivatives and
//!   envelope certificates;
//! * [`solver`] — weighted regularized ERM by damped Newton iteration,
//!   producing [`solver::SvmFit`] values;
//! * [`bootstrap`] — multinomial (Efron) resampling of a fitted estimator and
//!   the scaled draws `sqrt(n) * (f*_b - f_n)` on an evaluation grid;
//! * [`influence`] — the regularized-Hessian operator, influence functions,
//!   and the plug-in Gaussian law of `sqrt(n) * (f_n - f_P)`;
//! * [`law`] — empirical-law utilities (Kolmogorov and bounded-Lipschitz
//!   distances, quantiles, percentile confidence intervals);
//! * [`harness`] — synthetic data generators and Monte-Carlo experiments that
//!   compare the bootstrap law, the Gaussian approximation, and the true
//!   sampling law on a ladder of sample sizes.
//!
//! All numerical code is generic over the scalar type through the [`Real`]
//! trait (implemented for `f32` and `f64`); the `*64` aliases at the crate
//! root pin the common double-precision instantiations.

pub mod bootstrap;
pub mod error;
pub mod harness;
pub mod influence;
pub mod kernel;
pub mod law;
mod linalg;
pub mod loss;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod tol;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision kernel specification.
pub type KernelSpec64 = kernel::KernelSpec<f64>;
/// Double-precision loss specification.
pub type SmoothLoss64 = loss::SmoothLoss<f64>;
/// Double-precision point collection.
pub type Points64 = kernel::Points<f64>;
/// Double-precision dataset.
pub type Dataset64 = solver::Dataset<f64>;
/// Double-precision fitted estimator.
pub type SvmFit64 = solver::SvmFit<f64>;
/// Double-precision bootstrap ensemble.
pub type BootstrapEnsemble64 = bootstrap::BootstrapEnsemble<f64>;
/// Double-precision influence model.
pub type InfluenceModel64 = influence::InfluenceModel<f64>;
/// Double-precision asymptotic law.
pub type AsymptoticLaw64 = influence::AsymptoticLaw<f64>;
/// Double-precision empirical law.
pub type EmpiricalLaw64 = law::EmpiricalLaw<f64>;
