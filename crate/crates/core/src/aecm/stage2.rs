//! Second AECM stage: factor-analytic covariance updates for the eight PGMM
//! constraint patterns, with labels and latent factors as missing data.
//!
//! Scatter matrices `S_g` are only touched through `n x p` centred data, so
//! memory stays O(np + pq).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::model::CovarianceCode;
use crate::params::{Loadings, MixtureParams, Noise, Responsibilities, RowView};

/// Sufficient statistics of one component at the current `(Lambda_g, Psi_g)`.
struct GroupStats {
    mass: f64,
    /// `diag(S_g)`
    scatter_diag: DVector<f64>,
    /// `S_g beta_g'`, `p x q`
    scatter_beta: DMatrix<f64>,
    /// `I - beta_g Lambda_g + beta_g S_g beta_g'`, `q x q`
    theta: DMatrix<f64>,
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let q = m.nrows();
    Cholesky::new(m).ok_or_else(|| Error::numerical(format!("{what}: {q}x{q} system is not positive definite")))
}

fn group_stats(
    data: &DataMatrix,
    weights: nalgebra::DVectorView<'_, f64>,
    mean: RowView<'_>,
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
    component: usize,
) -> Result<GroupStats> {
    let x = data.values();
    let (n, p) = x.shape();
    let q = lambda.ncols();
    let mass: f64 = weights.sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateComponent {
            component,
            reason: "zero responsibility mass in covariance update".into(),
        });
    }

    let mut centered = x.clone();
    for j in 0..p {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }

    // beta = Lambda' Sigma^-1 = M^-1 Lambda' Psi^-1 with M = I + Lambda' Psi^-1 Lambda
    let mut scaled = lambda.clone();
    for j in 0..p {
        scaled.row_mut(j).scale_mut(1.0 / psi[j]);
    }
    let inner = DMatrix::identity(q, q) + lambda.transpose() * &scaled;
    let inner_chol = chol(inner, "stage-2 inner matrix")?;
    let inner_inv = inner_chol.inverse();

    // rows of v are beta (x_i - mu)
    let v = (&centered * &scaled) * &inner_inv;
    let mut weighted_v = v.clone();
    for i in 0..n {
        weighted_v.row_mut(i).scale_mut(weights[i] / mass);
    }
    let scatter_beta = centered.transpose() * &weighted_v;
    let beta_scatter_beta = v.transpose() * &weighted_v;
    // beta Lambda = I - M^-1
    let theta = inner_inv + beta_scatter_beta;

    let mut scatter_diag = DVector::zeros(p);
    for j in 0..p {
        scatter_diag[j] = centered
            .column(j)
            .iter()
            .zip(weights.iter())
            .map(|(d, w)| w * d * d)
            .sum::<f64>()
            / mass;
    }
    Ok(GroupStats {
        mass,
        scatter_diag,
        scatter_beta,
        theta: symmetrize(theta),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `Lambda_new = S beta' Theta^-1`.
fn solve_loadings(stats: &GroupStats) -> Result<DMatrix<f64>> {
    let theta = chol(stats.theta.clone(), "loading update")?;
    // Lambda Theta = S beta'  <=>  Theta Lambda' = beta S
    Ok(theta.solve(&stats.scatter_beta.transpose()).transpose())
}

/// `diag(S - Lambda beta S)` for a loading matrix from [`solve_loadings`].
fn residual_diag(stats: &GroupStats, lambda: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(stats.scatter_diag.len(), |j, _| {
        stats.scatter_diag[j] - lambda.row(j).dot(&stats.scatter_beta.row(j))
    })
}

/// `diag(S - 2 Lambda beta S + Lambda Theta Lambda')` for an arbitrary `Lambda`.
fn residual_diag_general(stats: &GroupStats, lambda: &DMatrix<f64>) -> DVector<f64> {
    let lt = lambda * &stats.theta;
    DVector::from_fn(stats.scatter_diag.len(), |j, _| {
        stats.scatter_diag[j] - 2.0 * lambda.row(j).dot(&stats.scatter_beta.row(j)) + lt.row(j).dot(&lambda.row(j))
    })
}

fn mean(v: &DVector<f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// Conditional M-step for the covariance structure. `mu` is the stage-1
/// result and `z` the responsibilities recomputed after stage 1.
pub fn update_covariance_stage2(
    data: &DataMatrix,
    z: &Responsibilities,
    mu: &DMatrix<f64>,
    code: CovarianceCode,
    current: &MixtureParams,
) -> Result<(Loadings, Noise)> {
    let groups = current.groups();
    if z.groups() != groups || mu.nrows() != groups || z.n() != data.n() || mu.ncols() != data.p() {
        return Err(Error::DimensionMismatch("stage-2 inputs disagree on G, n or p".into()));
    }
    if current.code() != code {
        return Err(Error::InvalidInput(format!(
            "current parameters have structure {}, requested {code}",
            current.code()
        )));
    }
    let n = data.n() as f64;
    let stats: Vec<GroupStats> = (0..groups)
        .map(|g| {
            group_stats(
                data,
                z.matrix().column(g),
                mu.row(g),
                current.loading(g),
                &current.noise_diag(g),
                g,
            )
        })
        .collect::<Result<_>>()?;
    let share = |s: &GroupStats| s.mass / n;

    if !code.shared_loadings() {
        let lambdas: Vec<DMatrix<f64>> = stats.iter().map(solve_loadings).collect::<Result<_>>()?;
        let residuals: Vec<DVector<f64>> = stats.iter().zip(&lambdas).map(|(s, l)| residual_diag(s, l)).collect();
        let noise = match (code.shared_noise(), code.isotropic_noise()) {
            (false, false) => Noise::GroupDiagonal(residuals),
            (false, true) => Noise::GroupIsotropic(residuals.iter().map(mean).collect()),
            (true, false) => Noise::SharedDiagonal(
                stats
                    .iter()
                    .zip(&residuals)
                    .fold(DVector::zeros(data.p()), |acc, (s, r)| acc + r * share(s)),
            ),
            (true, true) => Noise::SharedIsotropic(stats.iter().zip(&residuals).map(|(s, r)| share(s) * mean(r)).sum()),
        };
        return Ok((Loadings::PerGroup(lambdas), noise));
    }

    if code.shared_noise() {
        // Sigma is common: pool the statistics with weights n_g / n.
        let q = current.q();
        let mut pooled = GroupStats {
            mass: n,
            scatter_diag: DVector::zeros(data.p()),
            scatter_beta: DMatrix::zeros(data.p(), q),
            theta: DMatrix::zeros(q, q),
        };
        for s in &stats {
            let w = share(s);
            pooled.scatter_diag += &s.scatter_diag * w;
            pooled.scatter_beta += &s.scatter_beta * w;
            pooled.theta += &s.theta * w;
        }
        let lambda = solve_loadings(&pooled)?;
        let r = residual_diag(&pooled, &lambda);
        let noise = if code.isotropic_noise() {
            Noise::SharedIsotropic(mean(&r))
        } else {
            Noise::SharedDiagonal(r)
        };
        return Ok((Loadings::Shared(lambda), noise));
    }

    // Shared loadings with group-specific noise: Lambda is solved row by row
    // against psi-weighted Theta_g, then each Psi_g given the new Lambda.
    let p = data.p();
    let q = current.q();
    let lambda = if code.isotropic_noise() {
        let mut lhs = DMatrix::zeros(q, q);
        let mut rhs = DMatrix::zeros(p, q);
        for (g, s) in stats.iter().enumerate() {
            let w = s.mass / current.noise_at(g, 0);
            lhs += &s.theta * w;
            rhs += &s.scatter_beta * w;
        }
        let lhs = chol(lhs, "shared loading update")?;
        lhs.solve(&rhs.transpose()).transpose()
    } else {
        let mut lambda = DMatrix::zeros(p, q);
        for j in 0..p {
            let mut lhs = DMatrix::zeros(q, q);
            let mut rhs = DVector::zeros(q);
            for (g, s) in stats.iter().enumerate() {
                let w = s.mass / current.noise_at(g, j);
                lhs += &s.theta * w;
                rhs += s.scatter_beta.row(j).transpose() * w;
            }
            let lhs = chol(lhs, "shared loading row update")?;
            lambda.row_mut(j).copy_from(&lhs.solve(&rhs).transpose());
        }
        lambda
    };
    let residuals: Vec<DVector<f64>> = stats.iter().map(|s| residual_diag_general(s, &lambda)).collect();
    let noise = if code.isotropic_noise() {
        Noise::GroupIsotropic(residuals.iter().map(mean).collect())
    } else {
        Noise::GroupDiagonal(residuals)
    };
    Ok((Loadings::Shared(lambda), noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aecm::init::initial_params;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut r = rng::stream(seed, &[]);
        DataMatrix::new(DMatrix::from_fn(n, p, |i, j| {
            let v: f64 = StandardNormal.sample(&mut r);
            v + if i % 2 == 0 { 2.0 } else { -1.0 } * (j as f64 * 0.1)
        }))
        .unwrap()
    }

    #[test]
    fn zero_loadings_reduce_to_diagonal_scatter() {
        let data = random_data(30, 4, 3);
        let z = Responsibilities::from_labels(&vec![0; 30], 1).unwrap();
        let mu = crate::aecm::stage1::weighted_means(&data, &z).unwrap();
        let current = MixtureParams::new(
            DVector::from_element(1, 1.0),
            mu.clone(),
            Loadings::PerGroup(vec![DMatrix::zeros(4, 2)]),
            Noise::GroupDiagonal(vec![DVector::from_element(4, 1.0)]),
        )
        .unwrap();
        let (l, psi) = update_covariance_stage2(&data, &z, &mu, "UUU".parse().unwrap(), &current).unwrap();
        match l {
            Loadings::PerGroup(ls) => assert!(ls[0].iter().all(|&v| v == 0.0)),
            _ => panic!("wrong storage"),
        }
        let Noise::GroupDiagonal(d) = psi else {
            panic!("wrong storage")
        };
        for j in 0..4 {
            let col = data.values().column(j);
            let m = mu[(0, j)];
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 30.0;
            assert!((d[0][j] - var).abs() < 1e-12);
        }
    }

    fn dense_sigma(l: &Loadings, noise: &Noise, g: usize, p: usize) -> DMatrix<f64> {
        let lambda = match l {
            Loadings::Shared(m) => m.clone(),
            Loadings::PerGroup(ms) => ms[g].clone(),
        };
        let psi = DVector::from_fn(p, |j, _| match noise {
            Noise::SharedIsotropic(v) => *v,
            Noise::SharedDiagonal(d) => d[j],
            Noise::GroupIsotropic(v) => v[g],
            Noise::GroupDiagonal(ds) => ds[g][j],
        });
        &lambda * lambda.transpose() + DMatrix::from_diagonal(&psi)
    }

    #[test]
    fn sharing_constraints_are_vacuous_for_one_group() {
        let data = random_data(40, 5, 11);
        let z = Responsibilities::from_labels(&vec![0; 40], 1).unwrap();
        let mu = crate::aecm::stage1::weighted_means(&data, &z).unwrap();
        // pairs that differ only in sharing letters
        for (a, b) in [
            ("CCU", "UUU"),
            ("CUU", "UUU"),
            ("UCU", "UUU"),
            ("CCC", "UUC"),
            ("CUC", "UUC"),
            ("UCC", "UUC"),
        ] {
            let ca: CovarianceCode = a.parse().unwrap();
            let cb: CovarianceCode = b.parse().unwrap();
            let mut r = rng::stream(5, &[]);
            let start_b = initial_params(&data, &z, cb, 2, &mut r).unwrap();
            // same numbers, stored under the other layout
            let start_a = MixtureParams::new(
                start_b.pi().clone(),
                start_b.mu().clone(),
                if ca.shared_loadings() {
                    Loadings::Shared(start_b.loading(0).clone())
                } else {
                    Loadings::PerGroup(vec![start_b.loading(0).clone()])
                },
                match (ca.shared_noise(), ca.isotropic_noise()) {
                    (true, true) => Noise::SharedIsotropic(start_b.noise_at(0, 0)),
                    (true, false) => Noise::SharedDiagonal(start_b.noise_diag(0)),
                    (false, true) => Noise::GroupIsotropic(vec![start_b.noise_at(0, 0)]),
                    (false, false) => Noise::GroupDiagonal(vec![start_b.noise_diag(0)]),
                },
            )
            .unwrap();
            let (la, na) = update_covariance_stage2(&data, &z, &mu, ca, &start_a).unwrap();
            let (lb, nb) = update_covariance_stage2(&data, &z, &mu, cb, &start_b).unwrap();
            let diff = (dense_sigma(&la, &na, 0, 5) - dense_sigma(&lb, &nb, 0, 5)).abs().max();
            assert!(diff < 1e-10, "{a} vs {b}: {diff}");
        }
    }

    #[test]
    fn updates_respect_storage_layout() {
        let data = random_data(60, 6, 2);
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let z = Responsibilities::from_labels(&labels, 3).unwrap();
        let mu = crate::aecm::stage1::weighted_means(&data, &z).unwrap();
        for code in CovarianceCode::all() {
            let mut r = rng::stream(9, &[]);
            let start = initial_params(&data, &z, code, 2, &mut r).unwrap();
            let (l, noise) = update_covariance_stage2(&data, &z, &mu, code, &start).unwrap();
            let updated = MixtureParams::new(start.pi().clone(), mu.clone(), l, noise).unwrap();
            assert_eq!(updated.code(), code);
            assert_eq!(updated.q(), 2);
        }
    }
}
