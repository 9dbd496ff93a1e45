use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n x p` observation matrix, rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidInput("need at least 1 variable".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (rows, _) = values.shape();
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                k % rows + 1,
                k / rows + 1
            )));
        }
        Ok(DataMatrix { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Rows stacked twice; used by likelihood additivity checks.
    pub fn duplicated(&self) -> DataMatrix {
        let (n, p) = self.values.shape();
        let values = DMatrix::from_fn(2 * n, p, |i, j| self.values[(i % n, j)]);
        DataMatrix { values }
    }
}
