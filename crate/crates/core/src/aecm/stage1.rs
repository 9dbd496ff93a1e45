//! First AECM stage: mixing proportions and soft-thresholded means, with the
//! component labels as the only missing data.

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::params::{MixtureParams, Responsibilities};

#[derive(Debug, Clone, PartialEq)]
pub struct PiUpdate {
    pub pi: DVector<f64>,
    /// Components whose proportion fell below `1 / (10 n)`.
    pub degenerate: Vec<usize>,
}

pub fn update_pi(z: &Responsibilities) -> PiUpdate {
    let n = z.n() as f64;
    let pi = z.column_sums() / n;
    let floor = 1.0 / (10.0 * n);
    let degenerate = (0..pi.len()).filter(|&g| pi[g] < floor).collect();
    PiUpdate { pi, degenerate }
}

/// `sign(value) * max(|value| - shrink, 0)`; exact `0.0` when clipped.
pub fn soft_threshold(value: f64, shrink: f64) -> f64 {
    if shrink == 0.0 {
        return value;
    }
    let magnitude = value.abs() - shrink;
    if magnitude > 0.0 {
        magnitude.copysign(value)
    } else {
        0.0
    }
}

/// Penalized update of one mean coordinate given its unpenalized value and
/// the matching row sum of the current component covariance.
pub fn shrink_mean(mu_tilde: f64, sigma_row_sum: f64, lambda_n: f64) -> f64 {
    if sigma_row_sum > 0.0 {
        soft_threshold(mu_tilde, lambda_n * sigma_row_sum)
    } else {
        mu_tilde
    }
}

/// Responsibility-weighted means, `G x p`.
pub fn weighted_means(data: &DataMatrix, z: &Responsibilities) -> Result<DMatrix<f64>> {
    if z.n() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "responsibilities have {} rows, data has {}",
            z.n(),
            data.n()
        )));
    }
    let mass = z.column_sums();
    if let Some(g) = (0..mass.len()).find(|&g| !(mass[g] > 0.0)) {
        return Err(Error::DegenerateComponent {
            component: g,
            reason: "zero responsibility mass".into(),
        });
    }
    let mut sums = z.matrix().transpose() * data.values();
    for (g, mut row) in sums.row_iter_mut().enumerate() {
        row /= mass[g];
    }
    Ok(sums)
}

/// Soft-thresholded component means. `current` supplies the covariances used
/// in the shrinkage amount `lambda_n (Sigma_g 1)_j`.
pub fn update_mu_soft_threshold(
    data: &DataMatrix,
    z: &Responsibilities,
    current: &MixtureParams,
    lambda_n: f64,
) -> Result<DMatrix<f64>> {
    if !(lambda_n >= 0.0) {
        return Err(Error::Domain(format!("lambda_n = {lambda_n} must be non-negative")));
    }
    if current.groups() != z.groups() || current.p() != data.p() {
        return Err(Error::DimensionMismatch(
            "parameters do not match data/responsibilities".into(),
        ));
    }
    let mut mu = weighted_means(data, z)?;
    if lambda_n == 0.0 {
        return Ok(mu);
    }
    for g in 0..mu.nrows() {
        let row_sums = current.sigma_row_sums(g);
        for j in 0..mu.ncols() {
            mu[(g, j)] = shrink_mean(mu[(g, j)], row_sums[j], lambda_n);
        }
    }
    Ok(mu)
}
