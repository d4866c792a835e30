//! `svmboot` — config-driven CLI for kernel-ERM bootstrap experiments.
//!
//! Every command reads a JSON config, derives all randomness from the
//! mandatory `--seed` flag, writes its artifacts atomically into `--out`,
//! and prints a one-line summary per metric. On failure it emits a
//! machine-readable JSON error on stderr and exits with 2 (config),
//! 3 (numeric/convergence), or 4 (I/O).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use svmboot::bootstrap::bootstrap_ensemble;
use svmboot::harness::{
    consistency_csv, consistency_experiment, coverage_csv, coverage_experiment, generate,
    mc_sampling_law, reference_fit, ConsistencyConfig, CoverageConfig, ExperimentReport,
    GeneratorSpec,
};
use svmboot::influence::{asymptotic_law, build_influence_model, operator_min_singular_value};
use svmboot::kernel::{KernelSpec, Points};
use svmboot::law::EmpiricalLaw;
use svmboot::loss::SmoothLoss;
use svmboot::rng::{derive_seed, streams};
use svmboot::solver::fit;
use svmboot::{Error, Result};

#[derive(Parser)]
#[command(
    name = "svmboot",
    version,
    about = "Bootstrap and asymptotic-law experiments for kernel-regularized ERM",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model on a generated dataset
    Fit(CommonArgs),
    /// Bootstrap the fitted function on an evaluation grid
    Bootstrap(CommonArgs),
    /// Influence-operator Gaussian law on an evaluation grid
    Influence(CommonArgs),
    /// Monte-Carlo sampling law of sqrt(n) (f_n - f_ref)
    #[command(name = "mc-law")]
    McLaw(CommonArgs),
    /// Bootstrap-consistency experiment over an n-ladder
    Consistency(CommonArgs),
    /// Percentile-CI coverage experiment
    Coverage(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Master seed; all randomness derives from it (required)
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Per-command configs. `deny_unknown_fields` guarantees that every key in a
// config file is either consumed or rejected by name.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    generator: GeneratorSpec<f64>,
    n: usize,
    kernel: KernelSpec<f64>,
    loss: SmoothLoss<f64>,
    lambda: f64,
    #[serde(default)]
    grid: Option<Points<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BootstrapConfig {
    generator: GeneratorSpec<f64>,
    n: usize,
    kernel: KernelSpec<f64>,
    loss: SmoothLoss<f64>,
    lambda: f64,
    grid: Points<f64>,
    replicates: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InfluenceConfig {
    generator: GeneratorSpec<f64>,
    n: usize,
    kernel: KernelSpec<f64>,
    loss: SmoothLoss<f64>,
    lambda: f64,
    grid: Points<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McLawConfig {
    generator: GeneratorSpec<f64>,
    n: usize,
    kernel: KernelSpec<f64>,
    loss: SmoothLoss<f64>,
    lambda: f64,
    grid: Points<f64>,
    replicates: usize,
    n_ref: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        let payload = json!({
            "error": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        });
        eprintln!("{payload}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    let args = match &command {
        Command::Fit(a)
        | Command::Bootstrap(a)
        | Command::Influence(a)
        | Command::McLaw(a)
        | Command::Consistency(a)
        | Command::Coverage(a) => a,
    };
    let seed = args.seed.ok_or_else(|| {
        Error::InvalidConfig("--seed is required: all randomness derives from it".into())
    })?;
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("cannot set --jobs: {e}")))?;
    }
    let out = args.out.clone();
    let config_path = args.config.clone();
    match command {
        Command::Fit(_) => cmd_fit(&config_path, seed, &out),
        Command::Bootstrap(_) => cmd_bootstrap(&config_path, seed, &out),
        Command::Influence(_) => cmd_influence(&config_path, seed, &out),
        Command::McLaw(_) => cmd_mc_law(&config_path, seed, &out),
        Command::Consistency(_) => cmd_consistency(&config_path, seed, &out),
        Command::Coverage(_) => cmd_coverage(&config_path, seed, &out),
    }
}

fn load_config<C: serde::de::DeserializeOwned>(path: &Path) -> Result<C> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Writes `bytes` to `dir/name` via a temp file + rename so that no partial
/// artifact is ever visible.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = dir.join(format!(".tmp-{}-{}", std::process::id(), name));
    let target = dir.join(name);
    fs::write(&tmp, bytes).map_err(|e| Error::Io(format!("write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, &target)
        .map_err(|e| Error::Io(format!("rename to {}: {e}", target.display())))?;
    log::info!("wrote {}", target.display());
    Ok(())
}

fn write_json<S: serde::Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(format!("serialize {name}: {e}")))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn law_csv<T: svmboot::Real>(law: &EmpiricalLaw<T>) -> String {
    let mut out = String::new();
    if law.width() == 1 {
        out.push_str("value\n");
    } else {
        let header: Vec<String> = (0..law.width()).map(|j| format!("g{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for i in 0..law.len() {
        let row: Vec<String> = law.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_timings(dir: &Path, name: &str, report: &ExperimentReport<f64>) -> Result<()> {
    let stages: Vec<serde_json::Value> = report
        .runtimes
        .iter()
        .map(|r| json!({"stage": r.stage, "seconds": r.seconds}))
        .collect();
    let mut text = serde_json::to_string_pretty(&stages)
        .map_err(|e| Error::Io(format!("serialize timings: {e}")))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_fit(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: FitConfig = load_config(config)?;
    let data = generate(&cfg.generator, cfg.n, derive_seed(seed, streams::DATA, cfg.n as u64))?;
    let t0 = Instant::now();
    let model = fit(&cfg.kernel, &cfg.loss, cfg.lambda, &data)?;
    let seconds = t0.elapsed().as_secs_f64();

    write_json(out, "fit.json", &model)?;
    if let Some(grid) = &cfg.grid {
        let values = model.evaluate_on_grid(grid)?;
        let mut csv = String::new();
        let dim = grid.dim();
        let cols: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
        csv.push_str(&cols.join(","));
        csv.push_str(",value\n");
        for (i, v) in values.iter().enumerate() {
            let coords: Vec<String> = grid.row(i).iter().map(|c| format!("{c}")).collect();
            csv.push_str(&coords.join(","));
            csv.push_str(&format!(",{v}\n"));
        }
        write_atomic(out, "fit_values.csv", csv.as_bytes())?;
    }

    println!("n = {}", cfg.n);
    println!("objective = {}", model.objective());
    println!("rkhs_norm = {}", model.rkhs_norm());
    println!("grad_sup_norm = {}", model.grad_sup_norm());
    println!("iterations = {}", model.iterations());
    println!("fit_seconds = {seconds:.3}");
    Ok(())
}

fn cmd_bootstrap(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: BootstrapConfig = load_config(config)?;
    let data = generate(&cfg.generator, cfg.n, derive_seed(seed, streams::DATA, cfg.n as u64))?;
    let base = fit(&cfg.kernel, &cfg.loss, cfg.lambda, &data)?;
    let ensemble = bootstrap_ensemble(
        &base,
        &data,
        &cfg.grid,
        cfg.replicates,
        derive_seed(seed, streams::BOOTSTRAP, cfg.n as u64),
    )?;

    write_json(out, "bootstrap.json", &ensemble)?;
    let law = EmpiricalLaw::grid("bootstrap", ensemble.draws().to_vec())?;
    write_atomic(out, "bootstrap_draws.csv", law_csv(&law).as_bytes())?;

    println!("replicates = {}", cfg.replicates);
    println!("failed_replicates = {}", ensemble.failed_replicates().len());
    for j in 0..cfg.grid.n() {
        let m = law.marginal(j)?;
        println!("draw_sd[{j}] = {}", m.sample_sd()?);
    }
    Ok(())
}

fn cmd_influence(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: InfluenceConfig = load_config(config)?;
    let data = generate(&cfg.generator, cfg.n, derive_seed(seed, streams::DATA, cfg.n as u64))?;
    let base = fit(&cfg.kernel, &cfg.loss, cfg.lambda, &data)?;
    let model = build_influence_model(base, data.clone(), &cfg.grid)?;
    let law = asymptotic_law(&model, &data, &cfg.grid)?;
    let min_sv = operator_min_singular_value(&model)?;

    write_json(out, "influence.json", &law)?;

    println!("kp_dim = {}", model.kp_dim());
    println!("operator_min_singular_value = {min_sv}");
    for (j, v) in law.variances().iter().enumerate() {
        println!("variance[{j}] = {v}");
    }
    Ok(())
}

fn cmd_mc_law(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: McLawConfig = load_config(config)?;
    let f_ref =
        reference_fit(&cfg.generator, &cfg.kernel, &cfg.loss, cfg.lambda, cfg.n_ref, seed)?;
    let law = mc_sampling_law(
        &cfg.generator,
        &cfg.kernel,
        &cfg.loss,
        cfg.lambda,
        cfg.n,
        cfg.replicates,
        &cfg.grid,
        &f_ref,
        derive_seed(seed, streams::MONTE_CARLO, cfg.n as u64),
    )?;

    let summary = json!({
        "n": cfg.n,
        "requested_replicates": cfg.replicates,
        "effective_replicates": law.len(),
        "failed_replicates": cfg.replicates - law.len(),
        "grid": cfg.grid,
    });
    write_json(out, "mc_law.json", &summary)?;
    write_atomic(out, "mc_law.csv", law_csv(&law).as_bytes())?;

    println!("effective_replicates = {}", law.len());
    println!("failed_replicates = {}", cfg.replicates - law.len());
    for j in 0..cfg.grid.n() {
        let m = law.marginal(j)?;
        println!("mc_mean[{j}] = {}", m.mean()?);
        println!("mc_sd[{j}] = {}", m.sample_sd()?);
    }
    Ok(())
}

fn cmd_consistency(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: ConsistencyConfig<f64> = load_config(config)?;
    let report = consistency_experiment(&cfg, seed)?;

    write_json(out, "consistency_report.json", &report)?;
    write_atomic(out, "consistency.csv", consistency_csv(&report)?.as_bytes())?;
    write_timings(out, "consistency_timings.json", &report)?;

    for entry in report.consistency.as_deref().unwrap_or_default() {
        let n = entry.n;
        println!("n={n} median_ks_bootstrap_mc = {}", entry.median_ks_bootstrap_mc);
        println!("n={n} median_bl_bootstrap_mc = {}", entry.median_bl_bootstrap_mc);
        println!("n={n} median_ks_gaussian_mc = {}", entry.median_ks_gaussian_mc);
        println!("n={n} median_bl_gaussian_mc = {}", entry.median_bl_gaussian_mc);
    }
    Ok(())
}

fn cmd_coverage(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: CoverageConfig<f64> = load_config(config)?;
    let report = coverage_experiment(&cfg, seed)?;

    write_json(out, "coverage_report.json", &report)?;
    write_atomic(out, "coverage.csv", coverage_csv(&report)?.as_bytes())?;
    write_timings(out, "coverage_timings.json", &report)?;

    let summary = report.coverage.as_ref().expect("coverage section");
    println!("coverage = {}", summary.coverage);
    println!("binomial_se = {}", summary.binomial_se);
    println!("hits = {}", summary.hits);
    println!("effective_repetitions = {}", summary.effective_repetitions);
    println!("failed_repetitions = {}", summary.failed_repetitions);
    println!("truth = {}", summary.truth);
    Ok(())
}
