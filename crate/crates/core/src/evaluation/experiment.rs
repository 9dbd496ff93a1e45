//! Repeated simulate-then-select runs comparing BIC and LPBIC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aecm::{FitConfig, PenaltyConfig};
use crate::error::{Error, Result};
use crate::model::ModelDescriptor;
use crate::par::*;
use crate::rng;
use crate::selection::{grid_search, SelectionTable, TableRow};

use super::simulate::{simulate, SimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub model: ModelDescriptor,
    pub ari: f64,
    /// Criterion value of the selected cell.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub bic: Option<Selected>,
    pub lpbic: Option<Selected>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub reps: usize,
    /// How often each criterion selected each `G`.
    pub bic_groups: BTreeMap<usize, usize>,
    pub lpbic_groups: BTreeMap<usize, usize>,
    /// Replications where the LPBIC choice has strictly higher ARI.
    pub lpbic_ari_higher: usize,
    pub ari_ties: usize,
    pub failures: usize,
}

impl ExperimentSummary {
    pub fn bic_picks(&self, groups: usize) -> usize {
        self.bic_groups.get(&groups).copied().unwrap_or(0)
    }

    pub fn lpbic_picks(&self, groups: usize) -> usize {
        self.lpbic_groups.get(&groups).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<ReplicationRecord>,
    pub summary: ExperimentSummary,
}

fn selected(row: Option<&TableRow>, value: impl Fn(&TableRow) -> f64) -> Option<Selected> {
    let row = row?;
    let cell = row.fitted()?;
    Some(Selected {
        model: row.model,
        ari: cell.ari.unwrap_or(f64::NAN),
        value: value(row),
    })
}

/// Data and fit seeds used by replication `rep`.
pub fn replication_seeds(spec: &SimSpec, config: &FitConfig, rep: usize) -> (u64, u64) {
    (
        rng::derive_seed(spec.seed, &[rep as u64]),
        rng::derive_seed(config.seed, &[rep as u64]),
    )
}

/// Simulates one data set with `data_seed` and runs the grid search with
/// `fit_seed`. Returns the table too, for callers that want every cell.
pub fn run_replication(
    spec: &SimSpec,
    grid: &[ModelDescriptor],
    penalty: PenaltyConfig,
    config: &FitConfig,
    rep: usize,
    data_seed: u64,
    fit_seed: u64,
) -> (ReplicationRecord, Option<SelectionTable>) {
    let run = || -> Result<SelectionTable> {
        let (data, truth) = simulate(&SimSpec {
            seed: data_seed,
            ..spec.clone()
        })?;
        let mut table = grid_search(
            &data,
            grid,
            penalty,
            &FitConfig {
                seed: fit_seed,
                ..*config
            },
        )?;
        table.attach_truth(&truth)?;
        Ok(table)
    };
    match run() {
        Ok(table) => {
            let bic = selected(table.best_bic(), |r| r.fitted().map_or(f64::NAN, |c| c.criterion.bic));
            let lpbic = selected(table.best_lpbic(), |r| {
                r.fitted().map_or(f64::NAN, |c| c.criterion.lpbic)
            });
            let error = if bic.is_none() || lpbic.is_none() {
                Some("no converged cell".to_string())
            } else {
                None
            };
            (ReplicationRecord { rep, bic, lpbic, error }, Some(table))
        }
        Err(e) => (
            ReplicationRecord {
                rep,
                bic: None,
                lpbic: None,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

pub fn summarize(records: &[ReplicationRecord]) -> ExperimentSummary {
    let mut s = ExperimentSummary {
        reps: records.len(),
        ..Default::default()
    };
    for r in records {
        if let Some(b) = &r.bic {
            *s.bic_groups.entry(b.model.groups).or_default() += 1;
        }
        if let Some(l) = &r.lpbic {
            *s.lpbic_groups.entry(l.model.groups).or_default() += 1;
        }
        match (&r.bic, &r.lpbic) {
            (Some(b), Some(l)) if l.ari > b.ari => s.lpbic_ari_higher += 1,
            (Some(b), Some(l)) if l.ari == b.ari => s.ari_ties += 1,
            (Some(_), Some(_)) => {}
            _ => s.failures += 1,
        }
    }
    s
}

/// `reps` independent simulate-and-select runs; replication `r` uses the
/// streams from [`replication_seeds`].
pub fn replicate_experiment(
    spec: &SimSpec,
    grid: &[ModelDescriptor],
    reps: usize,
    penalty: PenaltyConfig,
    config: &FitConfig,
) -> Result<ExperimentReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be >= 1".into()));
    }
    spec.validate()?;
    let records: Vec<ReplicationRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (data_seed, fit_seed) = replication_seeds(spec, config, rep);
            run_replication(spec, grid, penalty, config, rep, data_seed, fit_seed).0
        })
        .collect();
    let summary = summarize(&records);
    Ok(ExperimentReport { records, summary })
}

impl ExperimentReport {
    /// `rep,criterion,G,q,code,ari,bic_or_lpbic_value`, two lines per replication.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["rep", "criterion", "G", "q", "code", "ari", "bic_or_lpbic_value"])
            .map_err(io)?;
        for r in &self.records {
            for (name, sel) in [("BIC", &r.bic), ("LPBIC", &r.lpbic)] {
                let rec = match sel {
                    Some(s) => vec![
                        r.rep.to_string(),
                        name.to_string(),
                        s.model.groups.to_string(),
                        s.model.q.to_string(),
                        s.model.code.to_string(),
                        format!("{}", s.ari),
                        format!("{}", s.value),
                    ],
                    None => vec![
                        r.rep.to_string(),
                        name.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ],
                };
                w.write_record(&rec).map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}
