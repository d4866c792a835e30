//! Efron (multinomial) bootstrap of the fitted kernel expansion.
//!
//! Each replicate draws `n` indices with replacement from the sample,
//! converts the occupation counts into weights `count_i / n`, refits the
//! weighted problem against the shared Gram matrix, and records the scaled
//! deviation `sqrt(n) (f*_b - f_n)` on an evaluation grid. Replicate `b`
//! always uses the seed derived for index `b`, so the ensemble is identical
//! no matter how many worker threads participate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_gram, Points};
use crate::rng::{rng_for, streams};
use crate::scalar::Real;
use crate::solver::{fit_with_store, Dataset, FitOptions, GramStore, SvmFit, WeightedSample};
use crate::tol::ENSEMBLE_FAILURE_FRACTION;

/// Multinomial occupation counts of `n` draws with replacement from `0..n`.
pub fn draw_multinomial_counts(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Bootstrap weights `count_i / n` from occupation counts.
pub fn weights_from_counts<T: Real>(counts: &[u32]) -> Result<WeightedSample<T>> {
    if counts.is_empty() {
        return Err(Error::InvalidInput("empty count vector".into()));
    }
    let n = T::from_usize(counts.len()).unwrap();
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total != counts.len() as u64 {
        return Err(Error::InvalidInput(format!(
            "counts sum to {total}, expected {}",
            counts.len()
        )));
    }
    WeightedSample::new(counts.iter().map(|&c| T::from_u32(c).unwrap() / n).collect())
}

/// The result of a bootstrap run: scaled grid deviations of the successful
/// replicates, in replicate order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct BootstrapEnsemble<T: Real> {
    grid: Points<T>,
    base_values: Vec<T>,
    /// One row per successful replicate: `sqrt(n) (f*_b(g_j) - f_n(g_j))_j`.
    draws: Vec<Vec<T>>,
    n: usize,
    replicates: usize,
    failed_replicates: Vec<usize>,
    seed: u64,
}

impl<T: Real> BootstrapEnsemble<T> {
    pub fn grid(&self) -> &Points<T> {
        &self.grid
    }

    pub fn base_values(&self) -> &[T] {
        &self.base_values
    }

    pub fn draws(&self) -> &[Vec<T>] {
        &self.draws
    }

    /// Sample size of the underlying dataset.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of replicates requested (successes plus failures).
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn failed_replicates(&self) -> &[usize] {
        &self.failed_replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The draws of grid coordinate `j`, one value per successful replicate.
    pub fn marginal(&self, j: usize) -> Result<Vec<T>> {
        if j >= self.grid.n() {
            return Err(Error::InvalidInput(format!(
                "grid index {j} out of range for {} grid points",
                self.grid.n()
            )));
        }
        Ok(self.draws.iter().map(|row| row[j]).collect())
    }
}

/// Runs the bootstrap with default solver options.
pub fn bootstrap_ensemble<T: Real>(
    base: &SvmFit<T>,
    data: &Dataset<T>,
    grid: &Points<T>,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapEnsemble<T>> {
    bootstrap_ensemble_with_options(base, data, grid, replicates, seed, &FitOptions::default())
}

/// Runs the bootstrap with explicit solver options.
///
/// `base` must be the uniformly weighted fit of its kernel, loss, and lambda
/// on `data`; the deviations are measured against its grid values. Replicates
/// whose refit fails are skipped; if more than the tolerated fraction fail,
/// the whole ensemble is an error.
pub fn bootstrap_ensemble_with_options<T: Real>(
    base: &SvmFit<T>,
    data: &Dataset<T>,
    grid: &Points<T>,
    replicates: usize,
    seed: u64,
    opts: &FitOptions<T>,
) -> Result<BootstrapEnsemble<T>> {
    if replicates == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    if grid.n() == 0 {
        return Err(Error::InvalidInput("bootstrap needs a non-empty evaluation grid".into()));
    }
    if base.support_points() != data.points() {
        return Err(Error::InvalidInput(
            "base fit was not computed on the points of this dataset".into(),
        ));
    }
    let n = data.n();
    let kernel = base.kernel();
    let loss = base.loss();
    let lambda = base.lambda();
    let store = GramStore::build(kernel, data.points())?;
    let cross = cross_gram(kernel, grid, data.points())?;
    let mut base_values = vec![T::zero(); grid.n()];
    cross.matvec(base.alpha(), &mut base_values);
    let sqrt_n = T::from_usize(n).unwrap().sqrt();

    let results: Vec<std::result::Result<Vec<T>, String>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, streams::BOOTSTRAP, b as u64);
            let counts = draw_multinomial_counts(n, &mut rng);
            let w = weights_from_counts::<T>(&counts).map_err(|e| e.to_string())?;
            let (fit_b, _) =
                fit_with_store(kernel, loss, lambda, data, &store, &w, opts)
                    .map_err(|e| e.to_string())?;
            let mut vals = vec![T::zero(); grid.n()];
            cross.matvec(fit_b.alpha(), &mut vals);
            Ok(vals
                .iter()
                .zip(&base_values)
                .map(|(&v, &b0)| sqrt_n * (v - b0))
                .collect())
        })
        .collect();

    let mut draws = Vec::with_capacity(replicates);
    let mut failed_replicates = Vec::new();
    let mut first_failure: Option<String> = None;
    for (b, res) in results.into_iter().enumerate() {
        match res {
            Ok(row) => draws.push(row),
            Err(msg) => {
                log::warn!("bootstrap replicate {b} failed: {msg}");
                if first_failure.is_none() {
                    first_failure = Some(msg);
                }
                failed_replicates.push(b);
            }
        }
    }
    if failed_replicates.len() as f64 > ENSEMBLE_FAILURE_FRACTION * replicates as f64 {
        return Err(Error::Ensemble(format!(
            "{} of {replicates} bootstrap replicates failed (tolerated fraction {}): {}",
            failed_replicates.len(),
            ENSEMBLE_FAILURE_FRACTION,
            first_failure.unwrap_or_else(|| "unknown failure".into())
        )));
    }
    Ok(BootstrapEnsemble {
        grid: grid.clone(),
        base_values,
        draws,
        n,
        replicates,
        failed_replicates,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::loss::SmoothLoss;
    use crate::solver::fit;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_problem() -> (KernelSpec<f64>, SmoothLoss<f64>, Dataset<f64>) {
        let kernel = KernelSpec::gaussian_rbf(0.8).unwrap();
        let loss = SmoothLoss::logistic_classification();
        let pts: Vec<Vec<f64>> = (0..16).map(|i| vec![(i as f64) * 0.4 - 3.0]).collect();
        let labels: Vec<f64> = (0..16).map(|i| if i < 8 { -1.0 } else { 1.0 }).collect();
        let data = Dataset::new(Points::new(pts).unwrap(), labels).unwrap();
        (kernel, loss, data)
    }

    #[test]
    fn multinomial_counts_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 7, 100] {
            let counts = draw_multinomial_counts(n, &mut rng);
            assert_eq!(counts.len(), n);
            assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), n);
        }
        let w = weights_from_counts::<f64>(&draw_multinomial_counts(50, &mut rng)).unwrap();
        let sum: f64 = w.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_has_requested_shape_and_is_deterministic() {
        let (kernel, loss, data) = toy_problem();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![-2.0], vec![0.0], vec![2.0]]).unwrap();
        let e1 = bootstrap_ensemble(&base, &data, &grid, 25, 7).unwrap();
        assert_eq!(e1.draws().len(), 25);
        assert!(e1.draws().iter().all(|row| row.len() == 3));
        assert_eq!(e1.failed_replicates(), &[] as &[usize]);
        let e2 = bootstrap_ensemble(&base, &data, &grid, 25, 7).unwrap();
        assert_eq!(e1.draws(), e2.draws());
        // A different seed gives different draws.
        let e3 = bootstrap_ensemble(&base, &data, &grid, 25, 8).unwrap();
        assert_ne!(e1.draws(), e3.draws());
    }

    #[test]
    fn ensemble_is_invariant_to_thread_count() {
        let (kernel, loss, data) = toy_problem();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![0.5]]).unwrap();
        let sequential = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| bootstrap_ensemble(&base, &data, &grid, 16, 3).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| bootstrap_ensemble(&base, &data, &grid, 16, 3).unwrap());
        assert_eq!(sequential.draws(), parallel.draws());
    }

    #[test]
    fn single_point_sample_has_identically_zero_draws() {
        let kernel = KernelSpec::gaussian_rbf(1.0).unwrap();
        let loss = SmoothLoss::logistic_classification();
        let data = Dataset::new(Points::new(vec![vec![0.2]]).unwrap(), vec![1.0]).unwrap();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let e = bootstrap_ensemble(&base, &data, &grid, 10, 5).unwrap();
        for row in e.draws() {
            assert_eq!(row, &[0.0, 0.0]);
        }
    }

    #[test]
    fn excessive_failures_are_an_ensemble_error() {
        let (kernel, loss, data) = toy_problem();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![0.0]]).unwrap();
        let opts = FitOptions { max_iterations: 0, ..FitOptions::default() };
        let err =
            bootstrap_ensemble_with_options(&base, &data, &grid, 10, 1, &opts).unwrap_err();
        assert_eq!(err.kind(), "ensemble");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn mismatched_base_fit_is_rejected() {
        let (kernel, loss, data) = toy_problem();
        let other = Dataset::new(
            Points::new(vec![vec![9.0], vec![8.0]]).unwrap(),
            vec![1.0, -1.0],
        )
        .unwrap();
        let base = fit(&kernel, &loss, 0.1, &other).unwrap();
        let grid = Points::new(vec![vec![0.0]]).unwrap();
        let err = bootstrap_ensemble(&base, &data, &grid, 4, 1).unwrap_err();
        assert_eq!(err.kind(), "input");
    }

    #[test]
    fn marginals_extract_columns() {
        let (kernel, loss, data) = toy_problem();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let e = bootstrap_ensemble(&base, &data, &grid, 8, 2).unwrap();
        let m0 = e.marginal(0).unwrap();
        assert_eq!(m0.len(), 8);
        for (b, row) in e.draws().iter().enumerate() {
            assert_eq!(m0[b], row[0]);
        }
        assert_eq!(e.marginal(2).unwrap_err().kind(), "input");
    }

    #[test]
    fn ensemble_serializes_round_trip() {
        let (kernel, loss, data) = toy_problem();
        let base = fit(&kernel, &loss, 0.1, &data).unwrap();
        let grid = Points::new(vec![vec![0.0]]).unwrap();
        let e = bootstrap_ensemble(&base, &data, &grid, 5, 11).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: BootstrapEnsemble<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.draws(), e.draws());
        assert_eq!(back.n(), e.n());
        assert_eq!(back.seed(), e.seed());
    }
}
