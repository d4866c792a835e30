//! Empirical-law analytics: ECDF distances, quantiles, and percentile
//! confidence intervals.
//!
//! Laws are finite samples, either scalar or one row per draw over an
//! evaluation grid. Distances operate on scalar laws (grid laws are compared
//! one marginal at a time).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A finite sample representing a distribution: `m` draws, each of `width`
/// coordinates (`width == 1` for scalar laws).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw<T: Real> {
    label: String,
    width: usize,
    draws: Vec<T>, // row-major, m x width
}

impl<T: Real> EmpiricalLaw<T> {
    /// A scalar law from raw draws.
    pub fn scalar(label: impl Into<String>, samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical law needs at least one draw".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite draw in empirical law".into()));
        }
        Ok(EmpiricalLaw { label: label.into(), width: 1, draws: samples })
    }

    /// A grid law from one row per draw.
    pub fn grid(label: impl Into<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 {
            return Err(Error::InvalidInput("empirical law needs at least one draw".into()));
        }
        let mut draws = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidInput(format!(
                    "law row {i} has width {} but expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite draw in empirical law".into()));
            }
            draws.extend_from_slice(row);
        }
        Ok(EmpiricalLaw { label: label.into(), width, draws })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of draws.
    pub fn len(&self) -> usize {
        self.draws.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_scalar(&self) -> bool {
        self.width == 1
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.draws[i * self.width..(i + 1) * self.width]
    }

    /// The scalar law of grid coordinate `j`.
    pub fn marginal(&self, j: usize) -> Result<EmpiricalLaw<T>> {
        if j >= self.width {
            return Err(Error::InvalidInput(format!(
                "marginal index {j} out of range for width {}",
                self.width
            )));
        }
        let samples = (0..self.len()).map(|i| self.draws[i * self.width + j]).collect();
        EmpiricalLaw::scalar(format!("{}[{j}]", self.label), samples)
    }

    fn scalar_values(&self) -> Result<&[T]> {
        if self.width != 1 {
            return Err(Error::InvalidInput(format!(
                "operation requires a scalar law, got width {}",
                self.width
            )));
        }
        Ok(&self.draws)
    }

    fn sorted_scalar(&self) -> Result<Vec<T>> {
        let mut v = self.scalar_values()?.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        Ok(v)
    }

    /// Sample mean (scalar laws).
    pub fn mean(&self) -> Result<T> {
        let v = self.scalar_values()?;
        let sum = v.iter().fold(T::zero(), |a, &b| a + b);
        Ok(sum / T::from_usize(v.len()).unwrap())
    }

    /// Unbiased sample standard deviation (scalar laws); 0 for a single draw.
    pub fn sample_sd(&self) -> Result<T> {
        let v = self.scalar_values()?;
        if v.len() < 2 {
            return Ok(T::zero());
        }
        let mean = self.mean()?;
        let ss = v.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
        Ok((ss / T::from_usize(v.len() - 1).unwrap()).sqrt())
    }
}

/// Fraction of `sorted` lying at or below `x` (right-continuous ECDF).
fn ecdf_at<T: Real>(sorted: &[T], x: T) -> T {
    let count = sorted.partition_point(|&s| s <= x);
    T::from_usize(count).unwrap() / T::from_usize(sorted.len()).unwrap()
}

/// Exact two-sample Kolmogorov distance `sup_t |ECDF_a(t) - ECDF_b(t)|`,
/// computed over the merged sorted support.
pub fn kolmogorov_distance<T: Real>(a: &EmpiricalLaw<T>, b: &EmpiricalLaw<T>) -> Result<T> {
    let sa = a.sorted_scalar()?;
    let sb = b.sorted_scalar()?;
    let (na, nb) = (sa.len(), sb.len());
    let (fa, fb) = (T::from_usize(na).unwrap(), T::from_usize(nb).unwrap());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut sup = T::zero();
    while i < na || j < nb {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < na && sa[i] == v {
            i += 1;
        }
        while j < nb && sb[j] == v {
            j += 1;
        }
        let diff = (T::from_usize(i).unwrap() / fa - T::from_usize(j).unwrap() / fb).abs();
        if diff > sup {
            sup = diff;
        }
    }
    Ok(sup)
}

/// Bounded-Lipschitz surrogate distance: the trapezoidal integral of
/// `|ECDF_a - ECDF_b|` over a uniform grid spanning the merged support,
/// clipped at 1. For distributions supported within a unit-diameter set this
/// agrees with the classical identity `BL = integral of |F_a - F_b|`.
pub fn bounded_lipschitz_distance<T: Real>(
    a: &EmpiricalLaw<T>,
    b: &EmpiricalLaw<T>,
    grid_resolution: usize,
) -> Result<T> {
    if grid_resolution < 2 {
        return Err(Error::InvalidConfig(format!(
            "bounded_lipschitz_distance needs grid_resolution >= 2, got {grid_resolution}"
        )));
    }
    let sa = a.sorted_scalar()?;
    let sb = b.sorted_scalar()?;
    let lo = sa[0].min(sb[0]);
    let hi = sa[sa.len() - 1].max(sb[sb.len() - 1]);
    if hi <= lo {
        return Ok(T::zero());
    }
    let r = grid_resolution;
    let dx = (hi - lo) / T::from_usize(r - 1).unwrap();
    let g = |x: T| (ecdf_at(&sa, x) - ecdf_at(&sb, x)).abs();
    let mut acc = (g(lo) + g(hi)) / T::of(2.0);
    for k in 1..r - 1 {
        acc += g(lo + T::from_usize(k).unwrap() * dx);
    }
    Ok((acc * dx).min(T::one()))
}

/// Interpolated order statistic at probability `q` (position `(m-1) q` on the
/// zero-based sorted draws, linear between neighbors).
pub fn quantile<T: Real>(a: &EmpiricalLaw<T>, q: T) -> Result<T> {
    if !q.is_finite() || q < T::zero() || q > T::one() {
        return Err(Error::InvalidConfig(format!("quantile level {q} outside [0, 1]")));
    }
    let s = a.sorted_scalar()?;
    let m = s.len();
    let h = T::from_usize(m - 1).unwrap() * q;
    let lo = h.floor().as_f64() as usize;
    if lo + 1 >= m {
        return Ok(s[m - 1]);
    }
    let frac = h - T::from_usize(lo).unwrap();
    Ok(s[lo] + frac * (s[lo + 1] - s[lo]))
}

/// Equal-tail percentile interval: the `(1-level)/2` and `1-(1-level)/2`
/// quantiles of the law.
pub fn percentile_ci<T: Real>(a: &EmpiricalLaw<T>, level: T) -> Result<(T, T)> {
    if !level.is_finite() || level <= T::zero() || level >= T::one() {
        return Err(Error::InvalidConfig(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "percentile interval needs at least two draws".into(),
        ));
    }
    let tail = (T::one() - level) / T::of(2.0);
    let lo = quantile(a, tail)?;
    let hi = quantile(a, T::one() - tail)?;
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

/// Writes the law as CSV: header `value` for scalar laws or `g0,...` for grid
/// laws, one row per draw.
pub fn write_csv<T: Real>(law: &EmpiricalLaw<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    if law.is_scalar() {
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
    fs::write(path, out)?;
    Ok(())
}

/// Reads a law written by [`write_csv`]; values parse at `f64` precision.
pub fn read_csv<T: Real>(path: &Path, label: impl Into<String>) -> Result<EmpiricalLaw<T>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty law file", path.display())))?;
    let width = header.split(',').count();
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<T> = line
            .split(',')
            .map(|tok| {
                tok.parse::<f64>().map(T::of).map_err(|_| {
                    Error::InvalidInput(format!(
                        "{}:{}: cannot parse {tok:?} as a number",
                        path.display(),
                        lineno + 2
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(Error::InvalidInput(format!(
                "{}:{}: {} columns, expected {width}",
                path.display(),
                lineno + 2,
                row.len()
            )));
        }
        rows.push(row);
    }
    if width == 1 {
        EmpiricalLaw::scalar(label, rows.into_iter().map(|r| r[0]).collect())
    } else {
        EmpiricalLaw::grid(label, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn law(samples: &[f64]) -> EmpiricalLaw<f64> {
        EmpiricalLaw::scalar("test", samples.to_vec()).unwrap()
    }

    fn random_law(rng: &mut ChaCha8Rng, m: usize) -> EmpiricalLaw<f64> {
        law(&(0..m).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>())
    }

    /// Exact integral of |ECDF_a - ECDF_b| via the piecewise-constant
    /// structure of the difference: an independent oracle for the
    /// trapezoidal implementation.
    fn exact_ecdf_l1(a: &EmpiricalLaw<f64>, b: &EmpiricalLaw<f64>) -> f64 {
        let sa = a.sorted_scalar().unwrap();
        let sb = b.sorted_scalar().unwrap();
        let mut breaks: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        breaks.dedup();
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let diff = (ecdf_at(&sa, w[0]) - ecdf_at(&sb, w[0])).abs();
            total += diff * (w[1] - w[0]);
        }
        total
    }

    #[test]
    fn kolmogorov_examples() {
        let a = law(&[0.0, 1.0]);
        assert_eq!(kolmogorov_distance(&a, &a).unwrap(), 0.0);
        let neg = law(&[-3.0, -1.0, -0.5]);
        let pos = law(&[1.5, 2.0]);
        assert_eq!(kolmogorov_distance(&neg, &pos).unwrap(), 1.0);
        let b = law(&[0.5]);
        assert_eq!(kolmogorov_distance(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn kolmogorov_is_a_metric_on_ecdfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let a = random_law(&mut rng, 40);
            let b = random_law(&mut rng, 25);
            let c = random_law(&mut rng, 33);
            let ab = kolmogorov_distance(&a, &b).unwrap();
            let ba = kolmogorov_distance(&b, &a).unwrap();
            assert_eq!(ab, ba);
            let ac = kolmogorov_distance(&a, &c).unwrap();
            let cb = kolmogorov_distance(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-12);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn bl_examples() {
        let a = law(&[0.2, 0.7, 0.9]);
        assert_eq!(bounded_lipschitz_distance(&a, &a, 100).unwrap(), 0.0);
        // Dirac masses delta apart have BL distance delta (for delta <= 1).
        let d0 = law(&[0.0]);
        let d3 = law(&[0.3]);
        let bl = bounded_lipschitz_distance(&d0, &d3, 10_000).unwrap();
        assert_abs_diff_eq!(bl, 0.3, epsilon = 1e-3);
        // Far-apart masses clip at 1.
        let far = law(&[100.0]);
        assert_eq!(bounded_lipschitz_distance(&d0, &far, 10_000).unwrap(), 1.0);
    }

    #[test]
    fn bl_matches_dense_integration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..3 {
            let a = random_law(&mut rng, 100);
            let b = random_law(&mut rng, 100);
            let exact = exact_ecdf_l1(&a, &b).min(1.0);
            let approx = bounded_lipschitz_distance(&a, &b, 2_000_000).unwrap();
            assert_abs_diff_eq!(approx, exact, epsilon = 1e-6);
            // Refinement improves the approximation.
            let coarse = bounded_lipschitz_distance(&a, &b, 2_000).unwrap();
            assert!((approx - exact).abs() <= (coarse - exact).abs() + 1e-12);
        }
    }

    #[test]
    fn bl_is_bounded_by_ks_times_diameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_law(&mut rng, 30);
            let b = random_law(&mut rng, 50);
            let ks = kolmogorov_distance(&a, &b).unwrap();
            let bl = bounded_lipschitz_distance(&a, &b, 4000).unwrap();
            // Support diameter is at most 1 for these laws.
            assert!(bl <= (ks * 1.0).min(1.0) + 1e-9);
        }
    }

    #[test]
    fn quantile_examples_and_monotonicity() {
        let a = law(&[3.0, 1.0, 4.0, 2.0]);
        assert_eq!(quantile(&a, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&a, 1.0).unwrap(), 4.0);
        assert_abs_diff_eq!(quantile(&a, 0.5).unwrap(), 2.5, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let l = random_law(&mut rng, 17);
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=20 {
                let q = k as f64 / 20.0;
                let v = quantile(&l, q).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
        assert_eq!(quantile(&a, -0.1).unwrap_err().kind(), "config");
        assert_eq!(quantile(&a, 1.1).unwrap_err().kind(), "config");
    }

    #[test]
    fn percentile_ci_examples() {
        let c = law(&[2.5; 6]);
        assert_eq!(percentile_ci(&c, 0.9).unwrap(), (2.5, 2.5));

        let hundred = law(&(1..=100).map(|i| i as f64).collect::<Vec<_>>());
        let (lo, hi) = percentile_ci(&hundred, 0.9).unwrap();
        assert_abs_diff_eq!(lo, 5.95, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 95.05, epsilon = 1e-12);

        // Nesting in the level.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l = random_law(&mut rng, 200);
        let (lo1, hi1) = percentile_ci(&l, 0.5).unwrap();
        let (lo2, hi2) = percentile_ci(&l, 0.95).unwrap();
        assert!(lo2 <= lo1 && hi1 <= hi2);

        assert_eq!(percentile_ci(&l, 1.0).unwrap_err().kind(), "config");
        assert_eq!(percentile_ci(&l, 0.0).unwrap_err().kind(), "config");
        assert_eq!(percentile_ci(&law(&[1.0]), 0.9).unwrap_err().kind(), "input");
    }

    #[test]
    fn symmetric_law_gives_nearly_symmetric_ci() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        let l = law(&samples);
        let (lo, hi) = percentile_ci(&l, 0.9).unwrap();
        let spread = hi - lo;
        assert!((lo + hi).abs() <= 0.05 * spread, "lo {lo}, hi {hi}");
    }

    #[test]
    fn grid_laws_and_marginals() {
        let g = EmpiricalLaw::grid("g", vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]])
            .unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.width(), 2);
        assert!(!g.is_scalar());
        let m1 = g.marginal(1).unwrap();
        assert_eq!(m1.row(0), &[10.0]);
        assert_eq!(m1.len(), 3);
        assert_eq!(g.marginal(2).unwrap_err().kind(), "input");
        // Scalar-only operations reject grid laws.
        assert_eq!(kolmogorov_distance(&g, &g).unwrap_err().kind(), "input");
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert_eq!(EmpiricalLaw::<f64>::scalar("x", vec![]).unwrap_err().kind(), "input");
        assert_eq!(
            EmpiricalLaw::scalar("x", vec![f64::NAN]).unwrap_err().kind(),
            "input"
        );
        assert_eq!(
            EmpiricalLaw::grid("x", vec![vec![1.0], vec![1.0, 2.0]]).unwrap_err().kind(),
            "input"
        );
    }

    #[test]
    fn csv_round_trips() {
        let dir = std::env::temp_dir().join(format!("svmboot-law-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let s = law(&[0.25, -1.5, 3.0]);
        let p = dir.join("scalar.csv");
        write_csv(&s, &p).unwrap();
        let back: EmpiricalLaw<f64> = read_csv(&p, "test").unwrap();
        assert_eq!(back, s);

        let g = EmpiricalLaw::grid("test", vec![vec![1.0, 2.0], vec![-0.125, 4.5]]).unwrap();
        let pg = dir.join("grid.csv");
        write_csv(&g, &pg).unwrap();
        let back: EmpiricalLaw<f64> = read_csv(&pg, "test").unwrap();
        assert_eq!(back, g);

        std::fs::write(dir.join("bad.csv"), "value\nnot-a-number\n").unwrap();
        assert_eq!(
            read_csv::<f64>(&dir.join("bad.csv"), "bad").unwrap_err().kind(),
            "input"
        );
        let _ = std::fs::remove_dir_all(&dir);
    }
}
