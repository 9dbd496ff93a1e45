//! Starting values: responsibilities (random Dirichlet or k-means) and the
//! factor-analytic parameters implied by them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::model::CovarianceCode;
use crate::params::{Loadings, MixtureParams, Noise, Responsibilities, RowView};

use super::config::Init;
use super::stage1::weighted_means;

const SUBSPACE_ITERATIONS: usize = 30;

/// Rows drawn from a flat Dirichlet on the `G`-simplex.
pub fn random_soft<R: Rng + ?Sized>(n: usize, groups: usize, rng: &mut R) -> Responsibilities {
    let mut z = DMatrix::zeros(n, groups);
    for i in 0..n {
        let mut total = 0.0;
        for g in 0..groups {
            let e: f64 = Exp1.sample(rng);
            z[(i, g)] = e;
            total += e;
        }
        z.row_mut(i).scale_mut(1.0 / total);
    }
    Responsibilities::from_matrix(z)
}

/// Seeded k-means++ followed by Lloyd iterations; returns 0-based labels.
pub fn kmeans<R: Rng + ?Sized>(data: &DataMatrix, k: usize, max_iter: usize, rng: &mut R) -> Vec<usize> {
    let x = data.values();
    let (n, p) = x.shape();
    let dist2 = |i: usize, c: &DVector<f64>| -> f64 { (0..p).map(|j| (x[(i, j)] - c[j]).powi(2)).sum() };

    let mut centers: Vec<DVector<f64>> = vec![x.row(rng.random_range(0..n)).transpose()];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick).transpose();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(i, &c));
        }
        centers.push(c);
    }

    let mut labels = vec![0usize; n];
    for iter in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, dist2(i, &centers[c])))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            changed |= best != *label;
            *label = best;
        }
        if !changed && iter > 0 {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            *center = DVector::from_fn(p, |j, _| {
                members.iter().map(|&i| x[(i, j)]).sum::<f64>() / members.len() as f64
            });
        }
    }
    labels
}

pub fn initial_responsibilities<R: Rng + ?Sized>(
    data: &DataMatrix,
    groups: usize,
    init: Init,
    rng: &mut R,
) -> Result<Responsibilities> {
    match init {
        Init::RandomSoft => Ok(random_soft(data.n(), groups, rng)),
        Init::KMeans => Responsibilities::from_labels(&kmeans(data, groups, 100, rng), groups),
    }
}

/// Rows `sqrt(z_i * scale) (x_i - mu)`, so `F'F` is the weighted scatter.
fn weighted_centered(
    data: &DataMatrix,
    z: nalgebra::DVectorView<'_, f64>,
    mean: RowView<'_>,
    scale: f64,
) -> DMatrix<f64> {
    let x = data.values();
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (z[i] * scale).sqrt() * (x[(i, j)] - mean[j])
    })
}

/// Leading `q` principal directions of `F'F`, scaled by the square roots of
/// their eigenvalues (so `Lambda Lambda'` is the best rank-`q` part). Uses
/// subspace iteration on the factored form; never builds `F'F`.
fn leading_loadings<R: Rng + ?Sized>(blocks: &[DMatrix<f64>], q: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = blocks[0].ncols();
    let apply = |v: &DMatrix<f64>| -> DMatrix<f64> {
        blocks
            .iter()
            .fold(DMatrix::zeros(p, v.ncols()), |acc, f| acc + f.transpose() * (f * v))
    };
    let mut basis = DMatrix::from_fn(p, q, |_, _| StandardNormal.sample(rng));
    for _ in 0..SUBSPACE_ITERATIONS {
        basis = apply(&basis).qr().q();
    }
    let projected = basis.transpose() * apply(&basis);
    let eig = SymmetricEigen::new((&projected + projected.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut lambda = DMatrix::zeros(p, q);
    for (k, &idx) in order.iter().enumerate() {
        let direction = &basis * eig.eigenvectors.column(idx);
        lambda.set_column(k, &(direction * eig.eigenvalues[idx].max(0.0).sqrt()));
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("initial loading estimate"));
    }
    Ok(lambda)
}

fn floored_residual(scatter_diag: &DVector<f64>, lambda: &DMatrix<f64>) -> DVector<f64> {
    let scale = scatter_diag.mean().max(1e-12);
    DVector::from_fn(scatter_diag.len(), |j, _| {
        let r = scatter_diag[j] - lambda.row(j).norm_squared();
        r.max(0.01 * scatter_diag[j]).max(1e-6 * scale)
    })
}

/// Parameters implied by starting responsibilities: weighted means and a
/// principal-component estimate of the loadings, constrained per `code`.
pub fn initial_params<R: Rng + ?Sized>(
    data: &DataMatrix,
    z: &Responsibilities,
    code: CovarianceCode,
    q: usize,
    rng: &mut R,
) -> Result<MixtureParams> {
    let groups = z.groups();
    let n = data.n() as f64;
    let mass = z.column_sums();
    let mu = weighted_means(data, z)?;
    let pi = &mass / n;

    let per_group: Vec<DMatrix<f64>> = (0..groups)
        .map(|g| weighted_centered(data, z.matrix().column(g), mu.row(g), 1.0 / mass[g]))
        .collect();
    let scatter_diags: Vec<DVector<f64>> = per_group
        .iter()
        .map(|f| DVector::from_fn(f.ncols(), |j, _| f.column(j).norm_squared()))
        .collect();

    let loadings = if code.shared_loadings() {
        let pooled: Vec<DMatrix<f64>> = per_group.iter().zip(pi.iter()).map(|(f, w)| f * w.sqrt()).collect();
        Loadings::Shared(leading_loadings(&pooled, q, rng)?)
    } else {
        Loadings::PerGroup(
            per_group
                .iter()
                .map(|f| leading_loadings(std::slice::from_ref(f), q, rng))
                .collect::<Result<_>>()?,
        )
    };
    let lambda_of = |g: usize| match &loadings {
        Loadings::Shared(m) => m,
        Loadings::PerGroup(ms) => &ms[g],
    };
    let residuals: Vec<DVector<f64>> = (0..groups)
        .map(|g| floored_residual(&scatter_diags[g], lambda_of(g)))
        .collect();
    let p = data.p();
    let noise = match (code.shared_noise(), code.isotropic_noise()) {
        (false, false) => Noise::GroupDiagonal(residuals),
        (false, true) => Noise::GroupIsotropic(residuals.iter().map(|r| r.mean()).collect()),
        (true, false) => Noise::SharedDiagonal(
            residuals
                .iter()
                .zip(pi.iter())
                .fold(DVector::zeros(p), |acc, (r, w)| acc + r * *w),
        ),
        (true, true) => Noise::SharedIsotropic(residuals.iter().zip(pi.iter()).map(|(r, w)| r.mean() * w).sum()),
    };
    MixtureParams::new(pi, mu, loadings, noise)
}
