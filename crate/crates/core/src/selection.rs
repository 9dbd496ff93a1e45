//! Information criteria and the grid search over PGMM models.
//!
//! Both criteria are "larger is better":
//!
//! * `BIC   = 2 log L - rho log n`
//! * `LPBIC = 2 log L - rho~ log n - (2 n lambda / G) sum_g sum_{j: mu_gj != 0}
//!   [ |mu_gj| + (Sigma_g)_jj / |mu_gj| - sign(mu_gj) ]`
//!
//! where `rho~` counts only the non-zero mean coordinates, and the inverse
//! unit information for `mu_g` is `Sigma_g` itself.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::aecm::{fit, resolve_lambda, FitConfig, FitResult, PenaltyConfig};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::evaluation::adjusted_rand_index;
use crate::model::{CovarianceCode, ModelDescriptor};
use crate::par::*;
use crate::rng;

/// Means smaller than this (but non-zero) make the reciprocal LPBIC term blow up.
pub const ILL_CONDITIONED_MEAN: f64 = 1e-12;

/// Covariance parameters: loadings (less rotational freedom) plus noise.
pub fn count_covariance_parameters(code: CovarianceCode, groups: usize, p: usize, q: usize) -> usize {
    let per_loading = p * q - q * (q.saturating_sub(1)) / 2;
    let loading_blocks = if code.shared_loadings() { 1 } else { groups };
    let distinct_noise = if code.shared_noise() { 1 } else { groups };
    let per_noise = if code.isotropic_noise() { 1 } else { p };
    per_loading * loading_blocks + distinct_noise * per_noise
}

/// `rho = (G - 1) + G p + covariance parameters`.
pub fn count_free_parameters(model: &ModelDescriptor, p: usize) -> Result<usize> {
    if model.q == 0 || model.q >= p || model.groups == 0 {
        return Err(Error::InvalidInput(format!("{model} is not valid for p = {p}")));
    }
    Ok(model.groups - 1 + model.groups * p + count_covariance_parameters(model.code, model.groups, p, model.q))
}

pub fn compute_bic(loglik: f64, rho: usize, n: usize) -> f64 {
    2.0 * loglik - rho as f64 * (n as f64).ln()
}

/// The third LPBIC summand. `means[g]` and `sigma_diags[g]` are the fitted
/// mean and covariance diagonal of group `g`; zero means are skipped.
pub fn lasso_term(means: &[Vec<f64>], sigma_diags: &[Vec<f64>], lambda_n: f64, n: usize) -> f64 {
    if lambda_n == 0.0 {
        return 0.0;
    }
    let groups = means.len() as f64;
    let mut sum = 0.0;
    for (mu, sd) in means.iter().zip(sigma_diags) {
        for (&m, &s) in mu.iter().zip(sd) {
            if m != 0.0 {
                sum += m.abs() + s / m.abs() - m.signum();
            }
        }
    }
    2.0 * n as f64 * lambda_n / groups * sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub bic: f64,
    pub lpbic: f64,
    pub rho: usize,
    pub rho_tilde: usize,
    pub lasso_term: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn compute_lpbic(fit: &FitResult, model: &ModelDescriptor, lambda_n: f64, n: usize) -> Result<CriterionValue> {
    if !(lambda_n >= 0.0) {
        return Err(Error::Domain(format!("lambda_n = {lambda_n} must be non-negative")));
    }
    let params = &fit.params;
    let p = params.p();
    let rho = count_free_parameters(model, p)?;
    let nonzero: usize = params.nonzero_mean_counts().iter().sum();
    let rho_tilde = model.groups - 1 + nonzero + count_covariance_parameters(model.code, model.groups, p, model.q);

    let means: Vec<Vec<f64>> = (0..model.groups)
        .map(|g| params.mu().row(g).iter().copied().collect())
        .collect();
    let sigma_diags: Vec<Vec<f64>> = (0..model.groups)
        .map(|g| params.sigma_diag(g).iter().copied().collect())
        .collect();
    let lasso = lasso_term(&means, &sigma_diags, lambda_n, n);

    let mut warnings = Vec::new();
    if lambda_n > 0.0 {
        let tiny = means
            .iter()
            .flatten()
            .filter(|m| **m != 0.0 && m.abs() < ILL_CONDITIONED_MEAN)
            .count();
        if tiny > 0 {
            warnings.push(format!(
                "{tiny} non-zero mean(s) below {ILL_CONDITIONED_MEAN:e}; reciprocal term is ill-conditioned"
            ));
        }
    }
    let log_n = (n as f64).ln();
    Ok(CriterionValue {
        bic: compute_bic(fit.loglik, rho, n),
        lpbic: 2.0 * fit.loglik - rho_tilde as f64 * log_n - lasso,
        rho,
        rho_tilde,
        lasso_term: lasso,
        warnings,
    })
}

/// What a grid cell produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub criterion: CriterionValue,
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub nonzero_mean_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    /// MAP labels of the fit (0-based).
    #[serde(skip)]
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CellOutcome {
    Fitted(CellFit),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: ModelDescriptor,
    pub outcome: CellOutcome,
}

impl TableRow {
    pub fn fitted(&self) -> Option<&CellFit> {
        match &self.outcome {
            CellOutcome::Fitted(f) => Some(f),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub lambda_n: f64,
    pub n: usize,
    pub rows: Vec<TableRow>,
    pub best_by_bic: Option<usize>,
    pub best_by_lpbic: Option<usize>,
}

/// Index of the converged row maximizing `key`; ties prefer smaller G, then
/// smaller q, then the lexicographically smaller code.
pub fn argmax_by(rows: &[TableRow], key: impl Fn(&CellFit) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(cell) = row.fitted() else { continue };
        let value = key(cell);
        if !cell.converged || !value.is_finite() {
            continue;
        }
        let take = match best {
            None => true,
            Some((b, bv)) => match value.partial_cmp(&bv).unwrap_or(Ordering::Equal) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => row.model.parsimony_key() < rows[b].model.parsimony_key(),
            },
        };
        if take {
            best = Some((i, value));
        }
    }
    best.map(|(i, _)| i)
}

impl SelectionTable {
    pub fn from_rows(rows: Vec<TableRow>, lambda_n: f64, n: usize) -> Self {
        let best_by_bic = argmax_by(&rows, |c| c.criterion.bic);
        let best_by_lpbic = argmax_by(&rows, |c| c.criterion.lpbic);
        SelectionTable {
            lambda_n,
            n,
            rows,
            best_by_bic,
            best_by_lpbic,
        }
    }

    pub fn best_bic(&self) -> Option<&TableRow> {
        self.best_by_bic.map(|i| &self.rows[i])
    }

    pub fn best_lpbic(&self) -> Option<&TableRow> {
        self.best_by_lpbic.map(|i| &self.rows[i])
    }

    /// Fills in the ARI of every fitted row against known labels.
    pub fn attach_truth(&mut self, truth: &[usize]) -> Result<()> {
        for row in &mut self.rows {
            if let CellOutcome::Fitted(cell) = &mut row.outcome {
                cell.ari = Some(adjusted_rand_index(truth, &cell.labels)?);
            }
        }
        Ok(())
    }

    pub fn has_ari(&self) -> bool {
        self.rows.iter().any(|r| r.fitted().is_some_and(|c| c.ari.is_some()))
    }

    /// One line per cell; the `ari` column appears only when labels were attached.
    pub fn to_csv(&self) -> Result<String> {
        let with_ari = self.has_ari();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "code",
            "G",
            "q",
            "loglik",
            "rho",
            "rho_tilde",
            "bic",
            "lpbic",
            "converged",
            "iterations",
        ];
        if with_ari {
            header.push("ari");
        }
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for row in &self.rows {
            let m = &row.model;
            let mut rec = vec![m.code.to_string(), m.groups.to_string(), m.q.to_string()];
            match row.fitted() {
                Some(c) => {
                    rec.extend([
                        format_float(c.loglik),
                        c.criterion.rho.to_string(),
                        c.criterion.rho_tilde.to_string(),
                        format_float(c.criterion.bic),
                        format_float(c.criterion.lpbic),
                        c.converged.to_string(),
                        c.iterations.to_string(),
                    ]);
                    if with_ari {
                        rec.push(c.ari.map(format_float).unwrap_or_default());
                    }
                }
                None => {
                    rec.extend(["", "", "", "", "", "false", ""].map(String::from));
                    if with_ari {
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self, meta: &TableMeta) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            meta: &'a TableMeta,
            #[serde(flatten)]
            table: &'a SelectionTable,
        }
        serde_json::to_string_pretty(&Doc { meta, table: self }).map_err(|e| Error::Io(e.to_string()))
    }
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Self-description written alongside a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub version: String,
    pub seed: u64,
    pub lambda_policy: String,
    pub lambda_n: f64,
    pub grid: Vec<ModelDescriptor>,
    pub fit: FitConfig,
    /// Seconds since the Unix epoch; excluded from reproducibility checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

impl TableMeta {
    pub fn new(grid: &[ModelDescriptor], penalty: PenaltyConfig, lambda_n: f64, fit: &FitConfig) -> Self {
        TableMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: fit.seed,
            lambda_policy: penalty.describe(),
            lambda_n,
            grid: grid.to_vec(),
            fit: *fit,
            generated_at: None,
        }
    }

    pub fn stamped(mut self) -> Self {
        self.generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
        self
    }
}

/// Seed for a grid cell; depends only on the user seed and the cell itself.
pub fn cell_seed(seed: u64, model: &ModelDescriptor) -> u64 {
    let code_index = CovarianceCode::ALL
        .iter()
        .position(|c| *c == model.code.to_string())
        .unwrap_or(0) as u64;
    rng::derive_seed(seed, &[model.groups as u64, model.q as u64, code_index])
}

fn evaluate_cell(data: &DataMatrix, model: ModelDescriptor, penalty: PenaltyConfig, config: &FitConfig) -> TableRow {
    let cell_config = FitConfig {
        seed: cell_seed(config.seed, &model),
        ..*config
    };
    let lambda_n = resolve_lambda(penalty, data.p());
    let outcome = fit(data, model, penalty, &cell_config).and_then(|result| {
        let criterion = compute_lpbic(&result, &model, lambda_n, data.n())?;
        Ok(CellFit {
            criterion,
            loglik: result.loglik,
            penalized_loglik: result.penalized_loglik,
            iterations: result.iterations,
            converged: result.converged,
            nonzero_mean_counts: result.nonzero_mean_counts.clone(),
            ari: None,
            labels: result.hard_labels(),
        })
    });
    TableRow {
        model,
        outcome: match outcome {
            Ok(cell) => CellOutcome::Fitted(cell),
            Err(e) => CellOutcome::Failed { reason: e.to_string() },
        },
    }
}

pub fn grid_search(
    data: &DataMatrix,
    grid: &[ModelDescriptor],
    penalty: PenaltyConfig,
    config: &FitConfig,
) -> Result<SelectionTable> {
    grid_search_with_progress(data, grid, penalty, config, |_| {})
}

/// [`grid_search`] with a callback invoked as each cell finishes (in
/// completion order, possibly from worker threads).
pub fn grid_search_with_progress(
    data: &DataMatrix,
    grid: &[ModelDescriptor],
    penalty: PenaltyConfig,
    config: &FitConfig,
    on_cell: impl Fn(&TableRow) + Sync + Send,
) -> Result<SelectionTable> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty model grid".into()));
    }
    config.validate()?;
    penalty.validate()?;
    for m in grid {
        m.validate(data.n(), data.p())?;
    }
    let rows: Vec<TableRow> = grid
        .par_iter()
        .map(|&model| {
            let row = evaluate_cell(data, model, penalty, config);
            on_cell(&row);
            row
        })
        .collect();
    if rows.iter().all(|r| r.fitted().is_none()) {
        return Err(Error::SearchFailed(rows.len()));
    }
    Ok(SelectionTable::from_rows(
        rows,
        resolve_lambda(penalty, data.p()),
        data.n(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_parameter_examples() {
        let ccc = ModelDescriptor::parse("CCC", 2, 1).unwrap();
        assert_eq!(count_free_parameters(&ccc, 4).unwrap(), 14);
        for (p, q) in [(5, 2), (10, 3), (4, 1)] {
            let uuu = ModelDescriptor::parse("UUU", 1, q).unwrap();
            let ccu = ModelDescriptor::parse("CCU", 1, q).unwrap();
            let expected = p + (p * q - q * (q - 1) / 2) + p;
            assert_eq!(count_free_parameters(&uuu, p).unwrap(), expected);
            assert_eq!(count_free_parameters(&ccu, p).unwrap(), expected);
            let uuu2 = ModelDescriptor::parse("UUU", 2, q).unwrap();
            assert_eq!(
                count_free_parameters(&uuu2, p).unwrap() - expected,
                1 + p + (p * q - q * (q - 1) / 2) + p
            );
        }
        assert!(count_free_parameters(&ccc, 1).is_err());
    }

    #[test]
    fn bic_examples() {
        assert_eq!(compute_bic(0.0, 0, 10), 0.0);
        let v = compute_bic(-100.0, 14, 100);
        assert!((v - (-200.0 - 14.0 * 100f64.ln())).abs() < 1e-12);
        assert!((v + 264.47).abs() < 5e-3);
        assert!((compute_bic(-100.0, 14, 100) - compute_bic(-100.0, 15, 100) - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lasso_term_example() {
        let t = lasso_term(&[vec![2.0]], &[vec![0.5]], 0.1, 10);
        assert!((t - 2.5).abs() < 1e-12);
        assert_eq!(lasso_term(&[vec![2.0]], &[vec![0.5]], 0.0, 10), 0.0);
        // zero means contribute nothing, negative means gain +1 from the sign term
        let t = lasso_term(&[vec![0.0, -2.0]], &[vec![9.0, 0.5]], 0.1, 10);
        assert!((t - 2.0 * (2.0 + 0.25 + 1.0)).abs() < 1e-12);
    }

    fn cell(model: &str, g: usize, q: usize, bic: f64, lpbic: f64, converged: bool) -> TableRow {
        TableRow {
            model: ModelDescriptor::parse(model, g, q).unwrap(),
            outcome: CellOutcome::Fitted(CellFit {
                criterion: CriterionValue {
                    bic,
                    lpbic,
                    rho: 1,
                    rho_tilde: 1,
                    lasso_term: 0.0,
                    warnings: vec![],
                },
                loglik: 0.0,
                penalized_loglik: 0.0,
                iterations: 1,
                converged,
                nonzero_mean_counts: vec![],
                ari: None,
                labels: vec![],
            }),
        }
    }

    #[test]
    fn argmax_skips_unconverged_and_breaks_ties_by_parsimony() {
        let rows = vec![
            cell("UUU", 2, 1, 5.0, 1.0, true),
            cell("CCC", 2, 1, 5.0, 1.0, true),
            cell("CCC", 1, 2, 4.0, 9.0, false),
            TableRow {
                model: ModelDescriptor::parse("CCC", 3, 1).unwrap(),
                outcome: CellOutcome::Failed { reason: "x".into() },
            },
            cell("CUC", 3, 1, 1.0, 2.0, true),
        ];
        let t = SelectionTable::from_rows(rows, 0.1, 10);
        assert_eq!(t.best_by_bic, Some(1));
        assert_eq!(t.best_by_lpbic, Some(4));
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("code,G,q,loglik,rho,rho_tilde,bic,lpbic,converged,iterations\n"));
    }
}
