//! Shared oracles for the integration suites: a derivative-free simplex
//! minimizer and an independently assembled regularized-risk objective.

#![allow(dead_code)]

use svmboot::kernel::{gram_matrix, KernelSpec, Points};
use svmboot::loss::SmoothLoss;
use svmboot::solver::Dataset;

/// Regularized empirical risk `sum_i w_i L(y_i, (K a)_i) + lambda a' K a`,
/// assembled from the kernel and loss primitives only — no solver code.
pub fn oracle_objective(
    kernel: &KernelSpec<f64>,
    loss: &SmoothLoss<f64>,
    lambda: f64,
    data: &Dataset<f64>,
    weights: &[f64],
    alpha: &[f64],
) -> f64 {
    let n = data.n();
    assert_eq!(weights.len(), n);
    assert_eq!(alpha.len(), n);
    let gram = gram_matrix(kernel, data.points()).expect("gram");
    let mut risk = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        let mut t = 0.0;
        for j in 0..n {
            t += gram.at(i, j) * alpha[j];
        }
        risk += weights[i] * loss.evaluate(data.label(i), t).expect("loss").value;
        quad += alpha[i] * t;
    }
    risk + lambda * quad
}

/// Nelder–Mead with periodic restarts from the incumbent. Plenty for the
/// smooth convex objectives used in the acceptance checks (dimension <= 5).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    initial_scale: f64,
    rounds: usize,
    iters_per_round: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut best = x0.to_vec();
    let mut best_val = f(&best);
    let mut scale = initial_scale;
    for _ in 0..rounds {
        let (x, v) = nelder_mead_round(&f, &best, scale, iters_per_round);
        if v < best_val {
            best = x;
            best_val = v;
        }
        scale *= 0.1;
        if scale < 1e-9 {
            scale = 1e-9;
        }
        let _ = dim;
    }
    (best, best_val)
}

fn nelder_mead_round<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    scale: f64,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    for _ in 0..max_iters {
        // Order the simplex by objective value.
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = ordered;
        values = ordered_vals;

        if (values[dim] - values[0]).abs() < 1e-14 * (1.0 + values[0].abs()) {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for x in simplex.iter().take(dim) {
            for k in 0..dim {
                centroid[k] += x[k] / dim as f64;
            }
        }

        let reflect: Vec<f64> =
            (0..dim).map(|k| centroid[k] + alpha * (centroid[k] - simplex[dim][k])).collect();
        let fr = f(&reflect);

        if fr < values[0] {
            let expand: Vec<f64> =
                (0..dim).map(|k| centroid[k] + gamma * (reflect[k] - centroid[k])).collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
        } else {
            let contract: Vec<f64> =
                (0..dim).map(|k| centroid[k] + rho * (simplex[dim][k] - centroid[k])).collect();
            let fc = f(&contract);
            if fc < values[dim] {
                simplex[dim] = contract;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    for k in 0..dim {
                        simplex[i][k] = simplex[0][k] + sigma * (simplex[i][k] - simplex[0][k]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

/// Uniformly random points in `[lo, hi]^dim`.
pub fn random_points(
    rng: &mut impl rand::Rng,
    n: usize,
    dim: usize,
    lo: f64,
    hi: f64,
) -> Points<f64> {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect();
    Points::new(rows).expect("points")
}
