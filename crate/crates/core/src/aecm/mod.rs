//! Penalized AECM fitting.
//!
//! One cycle:
//! 1. E-step at the current parameters (log-likelihood and `z`).
//! 2. Stage 1: `pi_g = sum_i z_ig / n`, then soft-thresholded means.
//! 3. Responsibilities recomputed at the stage-1 parameters.
//! 4. Stage 2: covariance update for the model's constraint pattern.
//!
//! Convergence is declared from the Aitken-accelerated limit of the penalized
//! log-likelihood sequence.

pub mod config;
pub mod init;
pub mod stage1;
pub mod stage2;

use crate::data::DataMatrix;
use crate::density::{e_step, penalty_value, responsibilities};
use crate::error::{Error, Result};
use crate::model::ModelDescriptor;
use crate::par::*;
use crate::params::{MixtureParams, Responsibilities};
use crate::rng;

pub use config::{resolve_lambda, FitConfig, Init, PenaltyConfig, DEFAULT_SEED};
pub use stage1::{shrink_mean, soft_threshold, update_mu_soft_threshold, update_pi, weighted_means, PiUpdate};
pub use stage2::update_covariance_stage2;

/// Smallest admissible noise variance.
pub const MIN_NOISE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelDescriptor,
    pub lambda_n: f64,
    pub params: MixtureParams,
    pub z: Responsibilities,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `p_g`: mean coordinates of each group that are not exactly zero.
    pub nonzero_mean_counts: Vec<usize>,
    /// Penalized log-likelihood after every completed cycle (first entry is
    /// the starting value).
    pub trace: Vec<f64>,
    /// Index of the start that produced this result.
    pub start: usize,
}

impl FitResult {
    pub fn hard_labels(&self) -> Vec<usize> {
        self.z.hard_labels()
    }

    /// Largest drop between consecutive trace entries (0 if monotone).
    pub fn max_decrease(&self) -> f64 {
        self.trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Aitken stopping rule on the last three entries of `trace`.
pub fn aitken_converged(trace: &[f64], tolerance: f64) -> bool {
    let k = trace.len();
    if k < 3 {
        return false;
    }
    let (l0, l1, l2) = (trace[k - 3], trace[k - 2], trace[k - 1]);
    let prev_step = l1 - l0;
    let step = l2 - l1;
    if step == 0.0 {
        return true;
    }
    if prev_step == 0.0 {
        return false;
    }
    let accel = step / prev_step;
    if !(accel < 1.0) {
        return false;
    }
    let limit = l1 + step / (1.0 - accel);
    (limit - l2).abs() < tolerance
}

fn check_degenerate_noise(params: &MixtureParams) -> Result<()> {
    for g in 0..params.groups() {
        for j in 0..params.p() {
            let v = params.noise_at(g, j);
            if !(v >= MIN_NOISE) || !v.is_finite() {
                return Err(Error::DegenerateComponent {
                    component: g,
                    reason: format!("noise variance {v:e} at coordinate {j}"),
                });
            }
        }
    }
    Ok(())
}

fn check_mass(z: &Responsibilities) -> Result<()> {
    let PiUpdate { degenerate, pi } = update_pi(z);
    match degenerate.first() {
        Some(&g) => Err(Error::DegenerateComponent {
            component: g,
            reason: format!("mixing proportion {:e} below 1/(10n)", pi[g]),
        }),
        None => Ok(()),
    }
}

/// Runs AECM from the given starting parameters.
pub fn fit_from(
    data: &DataMatrix,
    model: ModelDescriptor,
    lambda_n: f64,
    start: MixtureParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let n = data.n();
    let mut params = start;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let (mut loglik, mut z) = e_step(data, &params)?;
    trace.push(loglik - penalty_value(&params, lambda_n, n)?);

    while iterations < config.max_iterations {
        // stage 1
        let PiUpdate { pi, degenerate } = update_pi(&z);
        if let Some(&g) = degenerate.first() {
            return Err(Error::DegenerateComponent {
                component: g,
                reason: format!("mixing proportion {:e} below 1/(10n)", pi[g]),
            });
        }
        let mu = update_mu_soft_threshold(data, &z, &params, lambda_n)?;
        params.set_pi_mu(pi, mu);

        // stage 2 with refreshed labels
        let z_mid = responsibilities(data, &params)?;
        check_mass(&z_mid)?;
        let (loadings, noise) = update_covariance_stage2(data, &z_mid, params.mu(), model.code, &params)?;
        params.set_covariance(loadings, noise);
        check_degenerate_noise(&params)?;
        iterations += 1;

        let (ll, z_next) = e_step(data, &params)?;
        loglik = ll;
        z = z_next;
        trace.push(loglik - penalty_value(&params, lambda_n, n)?);
        if aitken_converged(&trace, config.tolerance) {
            converged = true;
            break;
        }
    }

    let penalized_loglik = *trace.last().unwrap();
    Ok(FitResult {
        model,
        lambda_n,
        nonzero_mean_counts: params.nonzero_mean_counts(),
        params,
        z,
        loglik,
        penalized_loglik,
        iterations,
        converged,
        trace,
        start: 0,
    })
}

/// One start: draw starting responsibilities from stream `(seed, start)`.
pub fn fit_single_start(
    data: &DataMatrix,
    model: ModelDescriptor,
    lambda_n: f64,
    config: &FitConfig,
    start: usize,
) -> Result<FitResult> {
    let mut rng = rng::stream(config.seed, &[start as u64]);
    let z0 = init::initial_responsibilities(data, model.groups, config.init, &mut rng)?;
    let params0 = init::initial_params(data, &z0, model.code, model.q, &mut rng)?;
    let mut result = fit_from(data, model, lambda_n, params0, config)?;
    result.start = start;
    Ok(result)
}

/// Best of `config.n_starts` penalized AECM runs.
///
/// Converged starts are preferred; among them the highest penalized
/// log-likelihood wins, ties going to the lower start index.
pub fn fit(data: &DataMatrix, model: ModelDescriptor, penalty: PenaltyConfig, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    penalty.validate()?;
    model.validate(data.n(), data.p())?;
    let lambda_n = resolve_lambda(penalty, data.p());

    let runs: Vec<Result<FitResult>> = (0..config.n_starts)
        .into_par_iter()
        .map(|s| fit_single_start(data, model, lambda_n, config, s))
        .collect();

    let mut best: Option<FitResult> = None;
    let mut diagnostics = Vec::new();
    for (s, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => (r.converged, r.penalized_loglik) > (b.converged, b.penalized_loglik),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => diagnostics.push(format!("start {s}: {e}")),
        }
    }
    best.ok_or(Error::FitFailed { diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aitken_rule() {
        assert!(!aitken_converged(&[1.0, 2.0], 1e-5));
        // geometric sequence with ratio 0.5 converging to 10
        let seq: Vec<f64> = (0..40).map(|k| 10.0 - 0.5f64.powi(k)).collect();
        let first = (3..=seq.len()).find(|&k| aitken_converged(&seq[..k], 1e-5)).unwrap();
        assert!(10.0 - seq[first - 1] < 1e-4);
        assert!(aitken_converged(&[1.0, 1.0, 1.0], 1e-5));
        // accelerating steps never count as converged
        assert!(!aitken_converged(&[0.0, 1.0, 3.0], 1e-5));
    }
}
