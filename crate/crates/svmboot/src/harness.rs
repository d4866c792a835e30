//! Synthetic-data experiments: generators for known sampling distributions,
//! a large-sample reference fit standing in for the population minimizer, a
//! Monte-Carlo oracle for the true sampling law of `sqrt(n) * (f_n - f_ref)`,
//! and the end-to-end consistency and coverage experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::bootstrap::bootstrap_ensemble;
use crate::error::{Error, Result};
use crate::influence::{asymptotic_law, build_influence_model, sample_gaussian};
use crate::kernel::{KernelSpec, Points};
use crate::law::{bounded_lipschitz_distance, kolmogorov_distance, percentile_ci, EmpiricalLaw};
use crate::loss::{SmoothLoss, TargetSpace};
use crate::rng::{derive_seed, rng_for, streams};
use crate::scalar::Real;
use crate::solver::{fit, Dataset, SvmFit};
use crate::tol;

fn default_dim() -> usize {
    1
}

fn default_weight<T: Real>() -> T {
    T::of(0.5)
}

fn default_gaussian_draws() -> usize {
    10_000
}

fn default_bl_resolution() -> usize {
    2001
}

/// A synthetic sampling distribution over labelled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    deny_unknown_fields,
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub enum GeneratorSpec<T: Real> {
    /// Two Gaussian classes: label `+1` with probability `weight_positive`
    /// and feature `mean_positive + spread * z`, else label `-1` around
    /// `mean_negative`. `spread = 0` degenerates to two atoms.
    ClassificationGaussianMixture {
        mean_positive: Vec<T>,
        mean_negative: Vec<T>,
        spread: T,
        #[serde(default = "default_weight")]
        weight_positive: T,
    },
    /// `x ~ Uniform[0, 2*pi]^dim`, `y = amplitude * sin(sum_k x_k) + noise`,
    /// with independent Gaussian noise of standard deviation `noise_sd`.
    RegressionSineNoise {
        #[serde(default = "default_dim")]
        dim: usize,
        amplitude: T,
        noise_sd: T,
    },
}

impl<T: Real> GeneratorSpec<T> {
    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::ClassificationGaussianMixture { mean_positive, .. } => {
                mean_positive.len()
            }
            GeneratorSpec::RegressionSineNoise { dim, .. } => *dim,
        }
    }

    /// Whether labels are drawn from `{-1, +1}`.
    pub fn produces_binary_labels(&self) -> bool {
        matches!(self, GeneratorSpec::ClassificationGaussianMixture { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::ClassificationGaussianMixture {
                mean_positive,
                mean_negative,
                spread,
                weight_positive,
            } => {
                if mean_positive.is_empty() || mean_positive.len() != mean_negative.len() {
                    return Err(Error::InvalidConfig(
                        "mixture means must be nonempty and share a dimension".into(),
                    ));
                }
                if mean_positive.iter().chain(mean_negative.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("mixture means must be finite".into()));
                }
                if !spread.is_finite() || *spread < T::zero() {
                    return Err(Error::InvalidConfig(format!(
                        "mixture spread must be finite and >= 0, got {spread}"
                    )));
                }
                if !weight_positive.is_finite()
                    || *weight_positive < T::zero()
                    || *weight_positive > T::one()
                {
                    return Err(Error::InvalidConfig(format!(
                        "weight_positive must lie in [0, 1], got {weight_positive}"
                    )));
                }
            }
            GeneratorSpec::RegressionSineNoise { dim, amplitude, noise_sd } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("generator dim must be >= 1".into()));
                }
                if !amplitude.is_finite() {
                    return Err(Error::InvalidConfig("amplitude must be finite".into()));
                }
                if !noise_sd.is_finite() || *noise_sd < T::zero() {
                    return Err(Error::InvalidConfig(format!(
                        "noise_sd must be finite and >= 0, got {noise_sd}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. samples from the generator; deterministic per seed.
pub fn generate<T: Real>(spec: &GeneratorSpec<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("cannot generate an empty dataset".into()));
    }
    let mut rng = rng_for(seed, streams::DATA, 0);
    let normal = rand_distr::StandardNormal;
    let d = spec.dim();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match spec {
        GeneratorSpec::ClassificationGaussianMixture {
            mean_positive,
            mean_negative,
            spread,
            weight_positive,
        } => {
            for _ in 0..n {
                let positive =
                    rand::Rng::random_range(&mut rng, 0.0..1.0) < weight_positive.as_f64();
                let mean = if positive { mean_positive } else { mean_negative };
                let mut x = Vec::with_capacity(d);
                for k in 0..d {
                    let z: f64 = rand::Rng::sample(&mut rng, normal);
                    x.push(mean[k] + *spread * T::of(z));
                }
                rows.push(x);
                labels.push(if positive { T::one() } else { -T::one() });
            }
        }
        GeneratorSpec::RegressionSineNoise { amplitude, noise_sd, .. } => {
            let tau = T::of(std::f64::consts::TAU);
            for _ in 0..n {
                let mut x = Vec::with_capacity(d);
                let mut s = T::zero();
                for _ in 0..d {
                    let u = T::of(rand::Rng::random_range(&mut rng, 0.0..1.0)) * tau;
                    s += u;
                    x.push(u);
                }
                let mut y = *amplitude * s.sin();
                if *noise_sd > T::zero() {
                    let z: f64 = rand::Rng::sample(&mut rng, normal);
                    y += *noise_sd * T::of(z);
                }
                rows.push(x);
                labels.push(y);
            }
        }
    }
    Dataset::new(Points::new(rows)?, labels)
}

/// Fits a very large sample as a stand-in for the population minimizer.
pub fn reference_fit<T: Real>(
    spec: &GeneratorSpec<T>,
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    n_ref: usize,
    seed: u64,
) -> Result<SvmFit<T>> {
    if n_ref < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "reference fit needs n_ref >= 10000 to stand in for the population, got {n_ref}"
        )));
    }
    let data = generate(spec, n_ref, derive_seed(seed, streams::REFERENCE, 0))?;
    fit(kernel, loss, lambda, &data)
}

/// Monte-Carlo law of `sqrt(n) * (f_n - f_ref)` on `grid`: `m_reps`
/// independent datasets of size `n`, one fit each. Failed replicates are
/// excluded, logged, and tolerated up to a 5% fraction.
#[allow(clippy::too_many_arguments)]
pub fn mc_sampling_law<T: Real>(
    spec: &GeneratorSpec<T>,
    kernel: &KernelSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
    n: usize,
    m_reps: usize,
    grid: &Points<T>,
    f_ref: &SvmFit<T>,
    master_seed: u64,
) -> Result<EmpiricalLaw<T>> {
    spec.validate()?;
    if m_reps == 0 {
        return Err(Error::InvalidInput("monte-carlo law needs at least one replicate".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("monte-carlo law needs n >= 1".into()));
    }
    if grid.n() == 0 {
        return Err(Error::InvalidInput("evaluation grid is empty".into()));
    }
    if grid.dim() != spec.dim() {
        return Err(Error::InvalidInput(format!(
            "grid dimension {} does not match generator dimension {}",
            grid.dim(),
            spec.dim()
        )));
    }
    let ref_values = f_ref.evaluate_on_grid(grid)?;
    let sqrt_n = T::from_usize(n).unwrap().sqrt();

    let results: Vec<Result<Vec<T>>> = (0..m_reps)
        .into_par_iter()
        .map(|m| {
            let data = generate(spec, n, derive_seed(master_seed, streams::MONTE_CARLO, m as u64))?;
            let f = fit(kernel, loss, lambda, &data)?;
            let values = f.evaluate_on_grid(grid)?;
            Ok(values
                .into_iter()
                .zip(&ref_values)
                .map(|(v, &r)| sqrt_n * (v - r))
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(m_reps);
    let mut failed = 0usize;
    let mut first_failure = None;
    for res in results {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert(e);
            }
        }
    }
    if failed > 0 {
        let first = first_failure.as_ref().map(ToString::to_string).unwrap_or_default();
        log::warn!("{failed}/{m_reps} monte-carlo replicates failed (first: {first})");
        if (failed as f64) > tol::ENSEMBLE_FAILURE_FRACTION * m_reps as f64 {
            return Err(Error::Ensemble(format!(
                "{failed} of {m_reps} monte-carlo replicates failed (first: {first})"
            )));
        }
    }
    EmpiricalLaw::grid("mc", rows)
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Configuration of a bootstrap-consistency experiment over an n-ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ConsistencyConfig<T: Real> {
    pub generator: GeneratorSpec<T>,
    pub kernel: KernelSpec<T>,
    pub loss: SmoothLoss<T>,
    pub lambda: T,
    /// When set, each ladder entry uses `lambda + 1/n` instead of `lambda`,
    /// probing convergent random regularization sequences.
    #[serde(default)]
    pub lambda_decay: bool,
    pub ladder: Vec<usize>,
    pub bootstrap_replicates: usize,
    pub mc_replicates: usize,
    #[serde(default = "default_gaussian_draws")]
    pub gaussian_draws: usize,
    #[serde(default = "default_bl_resolution")]
    pub bl_resolution: usize,
    pub grid: Points<T>,
    pub n_ref: usize,
}

/// Configuration of a coverage experiment at a single point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CoverageConfig<T: Real> {
    pub generator: GeneratorSpec<T>,
    pub kernel: KernelSpec<T>,
    pub loss: SmoothLoss<T>,
    pub lambda: T,
    #[serde(default)]
    pub lambda_decay: bool,
    pub n: usize,
    pub bootstrap_replicates: usize,
    pub repetitions: usize,
    pub level: T,
    pub x0: Vec<T>,
    pub n_ref: usize,
}

fn validate_problem<T: Real>(
    generator: &GeneratorSpec<T>,
    loss: &SmoothLoss<T>,
    lambda: T,
) -> Result<()> {
    generator.validate()?;
    if !lambda.is_finite() || lambda <= T::zero() {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    if loss.target_space() == TargetSpace::Binary && !generator.produces_binary_labels() {
        return Err(Error::InvalidConfig(
            "classification loss requires a generator with binary labels; \
             use a classification_gaussian_mixture generator or a regression loss"
                .into(),
        ));
    }
    Ok(())
}

impl<T: Real> ConsistencyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        validate_problem(&self.generator, &self.loss, self.lambda)?;
        if self.ladder.is_empty() {
            return Err(Error::InvalidConfig("n-ladder must not be empty".into()));
        }
        if self.ladder.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig("every ladder entry must be >= 1".into()));
        }
        if self.bootstrap_replicates == 0 || self.mc_replicates == 0 {
            return Err(Error::InvalidConfig(
                "bootstrap_replicates and mc_replicates must be >= 1".into(),
            ));
        }
        if self.gaussian_draws == 0 {
            return Err(Error::InvalidConfig("gaussian_draws must be >= 1".into()));
        }
        if self.bl_resolution < 2 {
            return Err(Error::InvalidConfig("bl_resolution must be >= 2".into()));
        }
        if self.grid.n() == 0 {
            return Err(Error::InvalidConfig("evaluation grid must not be empty".into()));
        }
        if self.grid.dim() != self.generator.dim() {
            return Err(Error::InvalidConfig(format!(
                "grid dimension {} does not match generator dimension {}",
                self.grid.dim(),
                self.generator.dim()
            )));
        }
        if self.n_ref < 10_000 {
            return Err(Error::InvalidConfig(format!(
                "n_ref must be >= 10000, got {}",
                self.n_ref
            )));
        }
        Ok(())
    }
}

impl<T: Real> CoverageConfig<T> {
    pub fn validate(&self) -> Result<()> {
        validate_problem(&self.generator, &self.loss, self.lambda)?;
        if !self.level.is_finite() || self.level <= T::zero() || self.level >= T::one() {
            return Err(Error::InvalidConfig(format!(
                "confidence level {} outside (0, 1)",
                self.level
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.bootstrap_replicates < 2 {
            return Err(Error::InvalidConfig(
                "coverage needs bootstrap_replicates >= 2 for a percentile interval".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.x0.len() != self.generator.dim() {
            return Err(Error::InvalidConfig(format!(
                "x0 has dimension {}, generator has dimension {}",
                self.x0.len(),
                self.generator.dim()
            )));
        }
        if self.n_ref < 10_000 {
            return Err(Error::InvalidConfig(format!(
                "n_ref must be >= 10000, got {}",
                self.n_ref
            )));
        }
        Ok(())
    }
}

/// The effective regularization at sample size `n`.
pub(crate) fn effective_lambda<T: Real>(lambda: T, decay: bool, n: usize) -> T {
    if decay {
        lambda + T::from_usize(n).unwrap().recip()
    } else {
        lambda
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Coverage,
}

/// Wall-clock time of one experiment stage. Excluded from serialized reports
/// so that report files are byte-for-byte reproducible; the CLI persists
/// timings separately.
#[derive(Debug, Clone)]
pub struct StageRuntime {
    pub stage: String,
    pub seconds: f64,
}

/// Distances for one ladder entry, per grid point and as medians.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ConsistencyEntry<T: Real> {
    pub n: usize,
    pub lambda: T,
    pub bootstrap_replicates: usize,
    pub bootstrap_failed: usize,
    pub mc_replicates: usize,
    pub mc_failed: usize,
    pub ks_bootstrap_mc: Vec<T>,
    pub bl_bootstrap_mc: Vec<T>,
    pub ks_gaussian_mc: Vec<T>,
    pub bl_gaussian_mc: Vec<T>,
    pub median_ks_bootstrap_mc: T,
    pub median_bl_bootstrap_mc: T,
    pub median_ks_gaussian_mc: T,
    pub median_bl_gaussian_mc: T,
}

/// One coverage repetition: the interval, the point estimate, and the hit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CoverageRow<T: Real> {
    pub repetition: usize,
    pub lower: T,
    pub upper: T,
    pub estimate: T,
    pub hit: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CoverageSummary<T: Real> {
    pub n: usize,
    pub level: T,
    pub repetitions: usize,
    pub effective_repetitions: usize,
    pub failed_repetitions: usize,
    pub hits: usize,
    pub coverage: T,
    pub binomial_se: T,
    pub x0: Vec<T>,
    pub truth: T,
    pub rows: Vec<CoverageRow<T>>,
}

/// Output of an experiment: a config echo plus the section for its kind.
/// A report is a pure function of `(config, master_seed)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ExperimentReport<T: Real> {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consistency: Option<Vec<ConsistencyEntry<T>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<CoverageSummary<T>>,
    #[serde(skip, default)]
    pub runtimes: Vec<StageRuntime>,
}

fn median<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / T::of(2.0)
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// For each ladder entry: one dataset, its bootstrap law, its influence
/// Gaussian law, and the Monte-Carlo law, compared per grid point by
/// Kolmogorov and bounded-Lipschitz distances.
pub fn consistency_experiment<T: Real>(
    config: &ConsistencyConfig<T>,
    master_seed: u64,
) -> Result<ExperimentReport<T>> {
    config.validate()?;
    let mut runtimes = Vec::new();

    let t0 = Instant::now();
    let f_ref = reference_fit(
        &config.generator,
        &config.kernel,
        &config.loss,
        config.lambda,
        config.n_ref,
        master_seed,
    )?;
    runtimes.push(StageRuntime {
        stage: "reference_fit".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let g = config.grid.n();
    let mut entries = Vec::with_capacity(config.ladder.len());
    for &n in &config.ladder {
        let t_n = Instant::now();
        let lam = effective_lambda(config.lambda, config.lambda_decay, n);
        let data =
            generate(&config.generator, n, derive_seed(master_seed, streams::DATA, n as u64))?;
        let base = fit(&config.kernel, &config.loss, lam, &data)?;

        let ensemble = bootstrap_ensemble(
            &base,
            &data,
            &config.grid,
            config.bootstrap_replicates,
            derive_seed(master_seed, streams::BOOTSTRAP, n as u64),
        )?;
        let boot_law = EmpiricalLaw::grid("bootstrap", ensemble.draws().to_vec())?;

        let mc_law = mc_sampling_law(
            &config.generator,
            &config.kernel,
            &config.loss,
            lam,
            n,
            config.mc_replicates,
            &config.grid,
            &f_ref,
            derive_seed(master_seed, streams::MONTE_CARLO, n as u64),
        )?;

        let model = build_influence_model(base, data.clone(), &config.grid)?;
        let gauss_cov = asymptotic_law(&model, &data, &config.grid)?;
        let gauss_law = sample_gaussian(
            &gauss_cov,
            config.gaussian_draws,
            derive_seed(master_seed, streams::GAUSSIAN, n as u64),
        )?;

        let mut ks_boot = Vec::with_capacity(g);
        let mut bl_boot = Vec::with_capacity(g);
        let mut ks_gauss = Vec::with_capacity(g);
        let mut bl_gauss = Vec::with_capacity(g);
        for j in 0..g {
            let mc_j = mc_law.marginal(j)?;
            let boot_j = boot_law.marginal(j)?;
            let gauss_j = gauss_law.marginal(j)?;
            ks_boot.push(kolmogorov_distance(&boot_j, &mc_j)?);
            bl_boot.push(bounded_lipschitz_distance(&boot_j, &mc_j, config.bl_resolution)?);
            ks_gauss.push(kolmogorov_distance(&gauss_j, &mc_j)?);
            bl_gauss.push(bounded_lipschitz_distance(&gauss_j, &mc_j, config.bl_resolution)?);
        }

        entries.push(ConsistencyEntry {
            n,
            lambda: lam,
            bootstrap_replicates: config.bootstrap_replicates,
            bootstrap_failed: ensemble.failed_replicates().len(),
            mc_replicates: config.mc_replicates,
            mc_failed: config.mc_replicates - mc_law.len(),
            median_ks_bootstrap_mc: median(&ks_boot),
            median_bl_bootstrap_mc: median(&bl_boot),
            median_ks_gaussian_mc: median(&ks_gauss),
            median_bl_gaussian_mc: median(&bl_gauss),
            ks_bootstrap_mc: ks_boot,
            bl_bootstrap_mc: bl_boot,
            ks_gaussian_mc: ks_gauss,
            bl_gaussian_mc: bl_gauss,
        });
        runtimes.push(StageRuntime {
            stage: format!("ladder_n_{n}"),
            seconds: t_n.elapsed().as_secs_f64(),
        });
    }

    Ok(ExperimentReport {
        kind: ExperimentKind::Consistency,
        master_seed,
        config: serde_json::to_value(config).map_err(|e| Error::Io(e.to_string()))?,
        consistency: Some(entries),
        coverage: None,
        runtimes,
    })
}

/// Repeatedly draws a dataset, bootstraps the fitted value at `x0`, forms the
/// percentile interval around the point estimate, and checks whether it
/// covers the reference value.
pub fn coverage_experiment<T: Real>(
    config: &CoverageConfig<T>,
    master_seed: u64,
) -> Result<ExperimentReport<T>> {
    config.validate()?;
    let mut runtimes = Vec::new();

    let t0 = Instant::now();
    let f_ref = reference_fit(
        &config.generator,
        &config.kernel,
        &config.loss,
        config.lambda,
        config.n_ref,
        master_seed,
    )?;
    let truth = f_ref.decision_function(&config.x0)?;
    runtimes.push(StageRuntime {
        stage: "reference_fit".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let t_reps = Instant::now();
    let lam = effective_lambda(config.lambda, config.lambda_decay, config.n);
    let x0_points = Points::new(vec![config.x0.clone()])?;
    let sqrt_n = T::from_usize(config.n).unwrap().sqrt();

    let results: Vec<Result<CoverageRow<T>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed_r = derive_seed(master_seed, streams::COVERAGE, r as u64);
            let data = generate(&config.generator, config.n, seed_r)?;
            let base = fit(&config.kernel, &config.loss, lam, &data)?;
            let estimate = base.decision_function(&config.x0)?;
            let ensemble = bootstrap_ensemble(
                &base,
                &data,
                &x0_points,
                config.bootstrap_replicates,
                seed_r,
            )?;
            // Unscaled bootstrap law of f*(x0) - f_n(x0).
            let deltas: Vec<T> =
                ensemble.draws().iter().map(|row| row[0] / sqrt_n).collect();
            let law = EmpiricalLaw::scalar("bootstrap_delta", deltas)?;
            let (lo, hi) = percentile_ci(&law, config.level)?;
            let lower = estimate + lo;
            let upper = estimate + hi;
            Ok(CoverageRow {
                repetition: r,
                lower,
                upper,
                estimate,
                hit: lower <= truth && truth <= upper,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(config.repetitions);
    let mut failed = 0usize;
    let mut first_failure = None;
    for res in results {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert(e);
            }
        }
    }
    if failed > 0 {
        let first = first_failure.as_ref().map(ToString::to_string).unwrap_or_default();
        log::warn!("{failed}/{} coverage repetitions failed (first: {first})", config.repetitions);
    }
    if rows.is_empty() {
        return Err(Error::Ensemble(format!(
            "all {} coverage repetitions failed (first: {})",
            config.repetitions,
            first_failure.as_ref().map(ToString::to_string).unwrap_or_default()
        )));
    }
    runtimes.push(StageRuntime {
        stage: "repetitions".into(),
        seconds: t_reps.elapsed().as_secs_f64(),
    });

    let effective = rows.len();
    let hits = rows.iter().filter(|r| r.hit).count();
    let p = T::from_usize(hits).unwrap() / T::from_usize(effective).unwrap();
    let se = (p * (T::one() - p) / T::from_usize(effective).unwrap()).sqrt();
    let summary = CoverageSummary {
        n: config.n,
        level: config.level,
        repetitions: config.repetitions,
        effective_repetitions: effective,
        failed_repetitions: failed,
        hits,
        coverage: p,
        binomial_se: se,
        x0: config.x0.clone(),
        truth,
        rows,
    };

    Ok(ExperimentReport {
        kind: ExperimentKind::Coverage,
        master_seed,
        config: serde_json::to_value(config).map_err(|e| Error::Io(e.to_string()))?,
        consistency: None,
        coverage: Some(summary),
        runtimes,
    })
}

// ---------------------------------------------------------------------------
// Flat CSV views
// ---------------------------------------------------------------------------

/// One row per `(n, grid_index, metric)` for the consistency report.
pub fn consistency_csv<T: Real>(report: &ExperimentReport<T>) -> Result<String> {
    let entries = report.consistency.as_ref().ok_or_else(|| {
        Error::InvalidInput("report has no consistency section".into())
    })?;
    let mut out = String::from("n,grid_index,metric,value\n");
    for e in entries {
        let columns: [(&str, &[T]); 4] = [
            ("ks_bootstrap_mc", &e.ks_bootstrap_mc),
            ("bl_bootstrap_mc", &e.bl_bootstrap_mc),
            ("ks_gaussian_mc", &e.ks_gaussian_mc),
            ("bl_gaussian_mc", &e.bl_gaussian_mc),
        ];
        for (metric, values) in columns {
            for (j, v) in values.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", e.n, j, metric, v));
            }
        }
    }
    Ok(out)
}

/// One row per repetition for the coverage report.
pub fn coverage_csv<T: Real>(report: &ExperimentReport<T>) -> Result<String> {
    let summary = report
        .coverage
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("report has no coverage section".into()))?;
    let mut out = String::from("repetition,lower,upper,estimate,hit\n");
    for row in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.repetition,
            row.lower,
            row.upper,
            row.estimate,
            u8::from(row.hit)
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Default experiment configurations
// ---------------------------------------------------------------------------

/// Regression default: a two-dimensional noisy sine, RBF kernel, robust
/// logistic-regression loss, fixed regularization. Two input dimensions keep
/// the local sample size at `n = 50` genuinely small, so the ladder walks
/// from a visible small-sample bootstrap discrepancy down to agreement.
pub fn default_regression_consistency<T: Real>() -> ConsistencyConfig<T> {
    ConsistencyConfig {
        generator: GeneratorSpec::RegressionSineNoise {
            dim: 2,
            amplitude: T::of(2.0),
            noise_sd: T::of(0.5),
        },
        kernel: KernelSpec::gaussian_rbf(T::of(2.0)).expect("valid gamma"),
        loss: SmoothLoss::logistic_regression(),
        lambda: T::of(0.05),
        lambda_decay: false,
        ladder: vec![50, 200, 800],
        bootstrap_replicates: 2000,
        mc_replicates: 2000,
        gaussian_draws: 10_000,
        bl_resolution: 2001,
        grid: Points::new(vec![
            vec![T::of(0.8), T::of(0.8)],
            vec![T::of(1.57), T::of(2.9)],
            vec![T::of(2.9), T::of(2.9)],
            vec![T::of(4.71), T::of(1.57)],
            vec![T::of(5.6), T::of(4.71)],
        ])
        .expect("valid grid"),
        n_ref: 20_000,
    }
}

/// Classification default: two Gaussian classes and the logistic loss.
pub fn default_classification_consistency<T: Real>() -> ConsistencyConfig<T> {
    ConsistencyConfig {
        generator: GeneratorSpec::ClassificationGaussianMixture {
            mean_positive: vec![T::one()],
            mean_negative: vec![-T::one()],
            spread: T::of(0.8),
            weight_positive: T::of(0.5),
        },
        kernel: KernelSpec::gaussian_rbf(T::of(0.5)).expect("valid gamma"),
        loss: SmoothLoss::logistic_classification(),
        lambda: T::of(0.1),
        lambda_decay: false,
        ladder: vec![50, 200, 800],
        bootstrap_replicates: 2000,
        mc_replicates: 2000,
        gaussian_draws: 10_000,
        bl_resolution: 2001,
        grid: Points::from_scalars(&[
            T::of(-1.5),
            T::of(-0.75),
            T::zero(),
            T::of(0.75),
            T::of(1.5),
        ]),
        n_ref: 20_000,
    }
}

/// Coverage default: the regression problem at `n = 400`, level 0.9.
pub fn default_regression_coverage<T: Real>() -> CoverageConfig<T> {
    CoverageConfig {
        generator: GeneratorSpec::RegressionSineNoise {
            dim: 2,
            amplitude: T::of(2.0),
            noise_sd: T::of(0.5),
        },
        kernel: KernelSpec::gaussian_rbf(T::of(2.0)).expect("valid gamma"),
        loss: SmoothLoss::logistic_regression(),
        lambda: T::of(0.05),
        lambda_decay: false,
        n: 400,
        bootstrap_replicates: 1000,
        repetitions: 500,
        level: T::of(0.9),
        x0: vec![T::of(2.9), T::of(2.9)],
        n_ref: 20_000,
    }
}
