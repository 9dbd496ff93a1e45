//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use std::f64::consts::PI;

use lpbic::model::Constraint;
use lpbic::{CovarianceCode, DataMatrix, MixtureParams};
use nalgebra::{DMatrix, DVector};
pub use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Log-density from a dense covariance via its Cholesky factor.
pub fn dense_log_density(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let chol = sigma.clone().cholesky().expect("covariance must be SPD");
    let p = x.len() as f64;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let d = x - mu;
    let quad = d.dot(&chol.solve(&d));
    -0.5 * (p * (2.0 * PI).ln() + logdet + quad)
}

/// Dense covariance of group `g` assembled from the public accessors.
pub fn sigma_of(params: &MixtureParams, g: usize) -> DMatrix<f64> {
    let l = params.loading(g);
    l * l.transpose() + DMatrix::from_diagonal(&params.noise_diag(g))
}

/// `log pi_g + log phi(x_i | g)` for every observation and group.
pub fn naive_log_weighted(data: &DataMatrix, params: &MixtureParams) -> DMatrix<f64> {
    let x = data.values();
    DMatrix::from_fn(x.nrows(), params.groups(), |i, g| {
        let xi = x.row(i).transpose();
        let mu = params.mu().row(g).transpose();
        params.pi()[g].ln() + dense_log_density(&xi, &mu, &sigma_of(params, g))
    })
}

fn row_log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn naive_loglik(data: &DataMatrix, params: &MixtureParams) -> f64 {
    let w = naive_log_weighted(data, params);
    (0..w.nrows())
        .map(|i| row_log_sum_exp(&w.row(i).iter().cloned().collect::<Vec<_>>()))
        .sum()
}

/// Posterior membership probabilities by Bayes' rule.
pub fn naive_responsibilities(data: &DataMatrix, params: &MixtureParams) -> DMatrix<f64> {
    let w = naive_log_weighted(data, params);
    let mut z = w.clone();
    for i in 0..w.nrows() {
        let row: Vec<f64> = w.row(i).iter().cloned().collect();
        let lse = row_log_sum_exp(&row);
        for g in 0..w.ncols() {
            z[(i, g)] = (w[(i, g)] - lse).exp();
        }
    }
    z
}

/// ARI from the four pair-agreement counts over all `C(n, 2)` pairs.
pub fn pair_counting_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if denom == 0.0 {
        return if sd == 0.0 && ds == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * (ss * dd - sd * ds) / denom
}

/// Counts free parameters by walking every slot of the model.
pub fn brute_force_free_parameters(code: CovarianceCode, g: usize, p: usize, q: usize) -> usize {
    let mut count = g - 1;
    count += g * p;
    let loading_blocks = if code.loadings == Constraint::Constrained { 1 } else { g };
    for _ in 0..loading_blocks {
        for row in 0..p {
            for col in 0..q {
                // upper triangle of the leading q x q block is fixed by rotation
                if col <= row {
                    count += 1;
                }
            }
        }
    }
    let noise_blocks = if code.noise_shared == Constraint::Constrained {
        1
    } else {
        g
    };
    let per_block = if code.isotropic == Constraint::Constrained {
        1
    } else {
        p
    };
    for _ in 0..noise_blocks {
        for _ in 0..per_block {
            count += 1;
        }
    }
    count
}

/// Minimizer of `0.5 (m - a)^2 + t |m|` by successive grid refinement.
pub fn grid_minimizer(a: f64, t: f64) -> f64 {
    let f = |m: f64| 0.5 * (m - a) * (m - a) + t * m.abs();
    let mut lo = -a.abs() - t - 1.0;
    let mut hi = a.abs() + t + 1.0;
    for _ in 0..60 {
        let steps = 200;
        let h = (hi - lo) / steps as f64;
        let mut best = lo;
        let mut best_val = f(lo);
        for k in 0..=steps {
            let m = lo + k as f64 * h;
            let v = f(m);
            if v < best_val {
                best = m;
                best_val = v;
            }
        }
        // always try zero, where the kink sits
        if lo <= 0.0 && hi >= 0.0 && f(0.0) <= best_val {
            best = 0.0;
        }
        lo = best - h;
        hi = best + h;
    }
    0.5 * (lo + hi)
}

/// Data whose mean is `mean` and whose ML covariance (divisor n) is exactly `sigma`.
pub fn data_with_moments(n: usize, mean: &DVector<f64>, sigma: &DMatrix<f64>, rng: &mut impl Rng) -> DataMatrix {
    let p = mean.len();
    let mut x = normal_matrix(n, p, rng);
    let m = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &m;
    }
    let s = x.transpose() * &x / n as f64;
    let ls = s.cholesky().expect("sample covariance SPD").l();
    let lt = sigma.clone().cholesky().expect("target SPD").l();
    // rows y_i = L_t L_s^-1 x_i
    let whitened = ls.solve_lower_triangular(&x.transpose()).unwrap();
    let mut y = (lt * whitened).transpose();
    for mut row in y.row_iter_mut() {
        row += mean.transpose();
    }
    DataMatrix::new(y).unwrap()
}

/// Two blobs centred at `-sep` and `+sep` in every coordinate.
pub fn two_blobs(n_each: usize, p: usize, sep: f64, seed: u64) -> (DataMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (g, c) in [(0usize, -sep), (1, sep)] {
        for _ in 0..n_each {
            rows.push(
                (0..p)
                    .map(|_| c + r.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<_>>(),
            );
            labels.push(g);
        }
    }
    (DataMatrix::from_rows(&rows).unwrap(), labels)
}

/// Random valid parameters stored according to `code`.
pub fn random_params(code: CovarianceCode, g: usize, p: usize, q: usize, rng: &mut impl Rng) -> MixtureParams {
    use lpbic::{Loadings, Noise};
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.5..2.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi = DVector::from_iterator(g, raw.iter().map(|v| v / total));
    let mu = normal_matrix(g, p, rng) * 2.0;
    let loadings = if code.shared_loadings() {
        Loadings::Shared(normal_matrix(p, q, rng))
    } else {
        Loadings::PerGroup((0..g).map(|_| normal_matrix(p, q, rng)).collect())
    };
    let mut var = || rng.random_range(0.2..2.0);
    let noise = match (code.shared_noise(), code.isotropic_noise()) {
        (true, true) => Noise::SharedIsotropic(var()),
        (true, false) => Noise::SharedDiagonal(DVector::from_fn(p, |_, _| var())),
        (false, true) => Noise::GroupIsotropic((0..g).map(|_| var()).collect()),
        (false, false) => Noise::GroupDiagonal((0..g).map(|_| DVector::from_fn(p, |_, _| var())).collect()),
    };
    let params = MixtureParams::new(pi, mu, loadings, noise).unwrap();
    assert_eq!(params.code(), code);
    params
}

/// Draws `n` points from the mixture described by `params`.
pub fn sample_mixture(params: &MixtureParams, n: usize, rng: &mut impl Rng) -> (DataMatrix, Vec<usize>) {
    let p = params.p();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // deterministic round-robin keeps every group populated
        let g = i % params.groups();
        let chol = sigma_of(params, g).cholesky().unwrap().l();
        let e = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = params.mu().row(g).transpose() + chol * e;
        rows.push(x.iter().cloned().collect());
        labels.push(g);
    }
    (DataMatrix::from_rows(&rows).unwrap(), labels)
}
