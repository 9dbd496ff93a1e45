//! Adjusted Rand index (Hubert and Arabie) and confusion tables.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn choose2(k: u64) -> f64 {
    (k as f64) * (k as f64 - 1.0) / 2.0
}

/// Cross-tabulation of two labelings: `rows` index the first argument's
/// classes, `columns` the second's, both in ascending label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTable {
    pub row_labels: Vec<usize>,
    pub column_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    pub fn new(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch(format!(
                "label vectors have lengths {} and {}",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (&a, &b) in truth.iter().zip(predicted) {
            *cells.entry((a, b)).or_default() += 1;
        }
        let mut row_labels: Vec<usize> = truth.to_vec();
        row_labels.sort_unstable();
        row_labels.dedup();
        let mut column_labels: Vec<usize> = predicted.to_vec();
        column_labels.sort_unstable();
        column_labels.dedup();
        let counts = row_labels
            .iter()
            .map(|&r| {
                column_labels
                    .iter()
                    .map(|&c| cells.get(&(r, c)).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        Ok(ConfusionTable {
            row_labels,
            column_labels,
            counts,
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput(
                "contingency table must be a non-empty rectangle".into(),
            ));
        }
        Ok(ConfusionTable {
            row_labels: (0..counts.len()).collect(),
            column_labels: (0..cols).collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Adjusted Rand index of the tabulated pair of partitions.
    ///
    /// When the expected and maximum indices coincide (e.g. both partitions
    /// are a single cluster) the ratio is undefined; this returns 1 if the
    /// partitions are identical up to relabeling and 0 otherwise.
    pub fn adjusted_rand_index(&self) -> Result<f64> {
        let n = self.total();
        if n < 2 {
            return Err(Error::InvalidInput("ARI needs at least two observations".into()));
        }
        let index: f64 = self.counts.iter().flatten().map(|&c| choose2(c)).sum();
        let row_sum: f64 = self.counts.iter().map(|r| choose2(r.iter().sum())).sum();
        let cols = self.counts[0].len();
        let col_sum: f64 = (0..cols).map(|j| choose2(self.counts.iter().map(|r| r[j]).sum())).sum();
        let expected = row_sum * col_sum / choose2(n);
        let max = 0.5 * (row_sum + col_sum);
        if max == expected {
            return Ok(if self.is_bijective() { 1.0 } else { 0.0 });
        }
        Ok((index - expected) / (max - expected))
    }

    fn is_bijective(&self) -> bool {
        let one_per_row = self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
        let cols = self.counts[0].len();
        let one_per_col = (0..cols).all(|j| self.counts.iter().filter(|r| r[j] > 0).count() == 1);
        one_per_row && one_per_col
    }
}

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("ARI needs at least two observations".into()));
    }
    ConfusionTable::new(a, b)?.adjusted_rand_index()
}
