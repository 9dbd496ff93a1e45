//! Gaussian log-densities for factor-analytic covariances and the mixture
//! E-step.
//!
//! `Sigma = Lambda Lambda' + Psi` is only ever handled through the `q x q`
//! matrix `M = I + Lambda' Psi^-1 Lambda`:
//!
//! * `Sigma^-1 = Psi^-1 - Psi^-1 Lambda M^-1 Lambda' Psi^-1`
//! * `log|Sigma| = log|Psi| + log|M|`

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::params::{MixtureParams, Responsibilities};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Precomputed pieces of one component's density.
#[derive(Debug, Clone)]
pub struct ComponentDensity {
    mean: DVector<f64>,
    inv_psi: DVector<f64>,
    /// `Psi^-1 Lambda`, `p x q`.
    scaled_loadings: DMatrix<f64>,
    inner: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ComponentDensity {
    pub fn new(mean: DVector<f64>, lambda: &DMatrix<f64>, psi: &DVector<f64>) -> Result<Self> {
        let p = mean.len();
        if lambda.nrows() != p || psi.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {p}, loadings are {}x{}, psi has length {}",
                lambda.nrows(),
                lambda.ncols(),
                psi.len()
            )));
        }
        if let Some(j) = psi.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!("psi[{j}] = {} is not positive", psi[j])));
        }
        let inv_psi = psi.map(|v| 1.0 / v);
        let mut scaled_loadings = lambda.clone();
        for (j, mut row) in scaled_loadings.row_iter_mut().enumerate() {
            row *= inv_psi[j];
        }
        let q = lambda.ncols();
        let inner_matrix = DMatrix::identity(q, q) + lambda.transpose() * &scaled_loadings;
        let inner = Cholesky::new(inner_matrix)
            .ok_or_else(|| Error::numerical(format!("Cholesky of the {q}x{q} matrix I + L'Psi^-1 L")))?;
        let log_det_inner: f64 = 2.0 * inner.l_dirty().diagonal().iter().take(q).map(|v| v.ln()).sum::<f64>();
        let log_det_psi: f64 = psi.iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * (p as f64 * LN_2PI + log_det_psi + log_det_inner);
        Ok(ComponentDensity {
            mean,
            inv_psi,
            scaled_loadings,
            inner,
            log_norm,
        })
    }

    pub fn from_params(params: &MixtureParams, g: usize) -> Result<Self> {
        ComponentDensity::new(params.mu().row(g).transpose(), params.loading(g), &params.noise_diag(g))
    }

    /// `log|2 pi Sigma|` halved and negated: the density at the mean.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, expected {}",
                x.len(),
                self.mean.len()
            )));
        }
        let d = x - &self.mean;
        let diag_part: f64 = d.iter().zip(self.inv_psi.iter()).map(|(a, w)| a * a * w).sum();
        let w = self.scaled_loadings.tr_mul(&d);
        let y = self
            .inner
            .l_dirty()
            .solve_lower_triangular(&w)
            .ok_or_else(|| Error::numerical("triangular solve in log_density"))?;
        Ok(self.log_norm - 0.5 * (diag_part - y.norm_squared()))
    }

    /// Log-densities of every row of `data`.
    pub fn log_densities(&self, data: &DataMatrix) -> Result<DVector<f64>> {
        let x = data.values();
        let (n, p) = x.shape();
        if p != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "data has {p} columns, component has dimension {}",
                self.mean.len()
            )));
        }
        let mut centered = x.clone();
        for j in 0..p {
            let m = self.mean[j];
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let mut diag_part = DVector::<f64>::zeros(n);
        for j in 0..p {
            let w = self.inv_psi[j];
            for (acc, v) in diag_part.iter_mut().zip(centered.column(j).iter()) {
                *acc += v * v * w;
            }
        }
        // rows of `projected` are Lambda' Psi^-1 (x_i - mu)
        let projected = &centered * &self.scaled_loadings;
        let y = self
            .inner
            .l_dirty()
            .solve_lower_triangular(&projected.transpose())
            .ok_or_else(|| Error::numerical("triangular solve in log_densities"))?;
        Ok(DVector::from_fn(n, |i, _| {
            self.log_norm - 0.5 * (diag_part[i] - y.column(i).norm_squared())
        }))
    }
}

/// `log phi(x | mu, Lambda Lambda' + Psi)` through the Woodbury identity.
pub fn log_density_woodbury(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DMatrix<f64>,
    psi: &DVector<f64>,
) -> Result<f64> {
    ComponentDensity::new(mu.clone(), lambda, psi)?.log_density(x)
}

fn check_dims(data: &DataMatrix, params: &MixtureParams) -> Result<()> {
    if data.p() != params.p() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} variables, parameters have {}",
            data.p(),
            params.p()
        )));
    }
    Ok(())
}

/// `n x G` matrix of `log pi_g + log phi(x_i | mu_g, Sigma_g)`.
pub fn log_weighted_densities(data: &DataMatrix, params: &MixtureParams) -> Result<DMatrix<f64>> {
    check_dims(data, params)?;
    let g_count = params.groups();
    let mut out = DMatrix::zeros(data.n(), g_count);
    for g in 0..g_count {
        let dens = ComponentDensity::from_params(params, g)?.log_densities(data)?;
        let log_pi = params.pi()[g].ln();
        for (o, v) in out.column_mut(g).iter_mut().zip(dens.iter()) {
            *o = v + log_pi;
        }
    }
    Ok(out)
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-likelihood and responsibilities from one pass over the data.
pub fn e_step(data: &DataMatrix, params: &MixtureParams) -> Result<(f64, Responsibilities)> {
    let mut log_w = log_weighted_densities(data, params)?;
    let mut loglik = 0.0;
    for mut row in log_w.row_iter_mut() {
        let lse = log_sum_exp(row.iter().copied().collect::<Vec<_>>().into_iter());
        if !lse.is_finite() {
            return Err(Error::numerical("mixture density is not finite for an observation"));
        }
        loglik += lse;
        row.apply(|v| *v = (*v - lse).exp());
        // renormalize so rows sum to one to the last ulp
        let s = row.sum();
        row /= s;
    }
    Ok((loglik, Responsibilities::from_matrix(log_w)))
}

pub fn log_likelihood(data: &DataMatrix, params: &MixtureParams) -> Result<f64> {
    e_step(data, params).map(|(ll, _)| ll)
}

pub fn responsibilities(data: &DataMatrix, params: &MixtureParams) -> Result<Responsibilities> {
    e_step(data, params).map(|(_, z)| z)
}

/// `n lambda_n sum_g pi_g sum_j |mu_gj|`; the penalized log-likelihood is
/// `log_likelihood - penalty_value`.
pub fn penalty_value(params: &MixtureParams, lambda_n: f64, n: usize) -> Result<f64> {
    if !(lambda_n >= 0.0) {
        return Err(Error::Domain(format!("lambda_n = {lambda_n} must be non-negative")));
    }
    if lambda_n == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = (0..params.groups())
        .map(|g| params.pi()[g] * params.mu().row(g).iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    Ok(n as f64 * lambda_n * weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Loadings, Noise};
    use std::f64::consts::PI;

    #[test]
    fn zero_loadings_standard_normal() {
        let v = log_density_woodbury(
            &DVector::zeros(2),
            &DVector::zeros(2),
            &DMatrix::zeros(2, 1),
            &DVector::from_element(2, 1.0),
        )
        .unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn at_mean_equals_log_norm() {
        let lambda = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.4, 0.9, 0.3, 0.0]);
        let psi = DVector::from_vec(vec![0.5, 1.5, 0.7]);
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.25]);
        let dens = ComponentDensity::new(mu.clone(), &lambda, &psi).unwrap();
        let sigma = &lambda * lambda.transpose() + DMatrix::from_diagonal(&psi);
        let logdet = (sigma * 2.0 * PI).determinant().ln();
        assert!((dens.log_density(&mu).unwrap() + 0.5 * logdet).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_psi_and_dims() {
        let r = log_density_woodbury(
            &DVector::zeros(2),
            &DVector::zeros(2),
            &DMatrix::zeros(2, 1),
            &DVector::from_vec(vec![1.0, 0.0]),
        );
        assert!(matches!(r, Err(Error::Domain(_))));
        let r = log_density_woodbury(
            &DVector::zeros(3),
            &DVector::zeros(2),
            &DMatrix::zeros(2, 1),
            &DVector::from_element(2, 1.0),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    fn fixture() -> (DataMatrix, MixtureParams) {
        let data = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![2.5, -1.0], vec![-3.0, 0.5], vec![1.0, 1.0]]).unwrap();
        let params = MixtureParams::new(
            DVector::from_vec(vec![0.3, 0.7]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, -1.0, 0.0]),
            Loadings::PerGroup(vec![
                DMatrix::from_row_slice(2, 1, &[0.8, -0.3]),
                DMatrix::from_row_slice(2, 1, &[0.1, 1.2]),
            ]),
            Noise::GroupDiagonal(vec![
                DVector::from_vec(vec![0.4, 1.1]),
                DVector::from_vec(vec![0.9, 0.6]),
            ]),
        )
        .unwrap();
        (data, params)
    }

    #[test]
    fn single_component_loglik_is_sum_of_log_densities() {
        let (data, _) = fixture();
        let lambda = DMatrix::from_row_slice(2, 1, &[0.8, -0.3]);
        let psi = DVector::from_vec(vec![0.4, 1.1]);
        let params = MixtureParams::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 2, &[0.1, 0.2]),
            Loadings::Shared(lambda.clone()),
            Noise::SharedDiagonal(psi.clone()),
        )
        .unwrap();
        let mu = DVector::from_vec(vec![0.1, 0.2]);
        let expected: f64 = (0..data.n())
            .map(|i| log_density_woodbury(&data.values().row(i).transpose(), &mu, &lambda, &psi).unwrap())
            .sum();
        assert!((log_likelihood(&data, &params).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicated_data_doubles_loglik() {
        let (data, params) = fixture();
        let a = log_likelihood(&data, &params).unwrap();
        let b = log_likelihood(&data.duplicated(), &params).unwrap();
        assert!((2.0 * a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn identical_components_split_evenly() {
        let (data, _) = fixture();
        let params = MixtureParams::new(
            DVector::from_vec(vec![0.5, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            Loadings::Shared(DMatrix::from_row_slice(2, 1, &[0.3, 0.3])),
            Noise::SharedIsotropic(1.0),
        )
        .unwrap();
        let z = responsibilities(&data, &params).unwrap();
        assert!(z.matrix().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn equidistant_point_is_split() {
        let data = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let params = MixtureParams::new(
            DVector::from_vec(vec![0.5, 0.5]),
            DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 2.0, 0.0]),
            Loadings::Shared(DMatrix::from_row_slice(2, 1, &[0.0, 0.7])),
            Noise::SharedDiagonal(DVector::from_vec(vec![1.0, 2.0])),
        )
        .unwrap();
        let z = responsibilities(&data, &params).unwrap();
        for i in 0..2 {
            assert!((z.matrix()[(i, 0)] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn far_observation_does_not_underflow_to_nan() {
        let data = DataMatrix::from_rows(&[vec![1e4, -1e4], vec![0.0, 0.0]]).unwrap();
        let (_, params) = fixture();
        let (ll, z) = e_step(&data, &params).unwrap();
        assert!(ll.is_finite());
        assert!(z.matrix().iter().all(|v| v.is_finite()));
        for row in z.matrix().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_examples() {
        let params = MixtureParams::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 2, &[2.0, -3.0]),
            Loadings::Shared(DMatrix::zeros(2, 1)),
            Noise::SharedIsotropic(1.0),
        )
        .unwrap();
        assert!((penalty_value(&params, 0.1, 10).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(penalty_value(&params, 0.0, 10).unwrap(), 0.0);
        assert!(penalty_value(&params, -0.1, 10).is_err());
        let (_, mut zero) = fixture();
        zero.set_pi_mu(zero.pi().clone(), DMatrix::zeros(2, 2));
        assert_eq!(penalty_value(&zero, 0.3, 10).unwrap(), 0.0);
    }
}
