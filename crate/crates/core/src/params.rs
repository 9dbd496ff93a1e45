//! Mixture parameters with constraint-aware storage.
//!
//! Shared structures are stored once, so a `C` position in the covariance code
//! can never drift apart between groups during updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Constraint, CovarianceCode};

/// Borrowed row of a column-major matrix, e.g. `mu.row(g)`.
pub(crate) type RowView<'a> = nalgebra::MatrixView<'a, f64, nalgebra::U1, nalgebra::Dyn, nalgebra::U1, nalgebra::Dyn>;

/// Factor loadings: one `p x q` matrix, or one per group.
#[derive(Debug, Clone, PartialEq)]
pub enum Loadings {
    Shared(DMatrix<f64>),
    PerGroup(Vec<DMatrix<f64>>),
}

/// Diagonal noise variances, keyed by (sharing, isotropy).
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    SharedIsotropic(f64),
    SharedDiagonal(DVector<f64>),
    GroupIsotropic(Vec<f64>),
    GroupDiagonal(Vec<DVector<f64>>),
}

impl Noise {
    /// Every stored variance, once per storage slot.
    pub fn slots(&self) -> Vec<f64> {
        match self {
            Noise::SharedIsotropic(v) => vec![*v],
            Noise::SharedDiagonal(d) => d.iter().copied().collect(),
            Noise::GroupIsotropic(v) => v.clone(),
            Noise::GroupDiagonal(ds) => ds.iter().flat_map(|d| d.iter().copied()).collect(),
        }
    }

    fn at(&self, g: usize, j: usize) -> f64 {
        match self {
            Noise::SharedIsotropic(v) => *v,
            Noise::SharedDiagonal(d) => d[j],
            Noise::GroupIsotropic(v) => v[g],
            Noise::GroupDiagonal(ds) => ds[g][j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pi: DVector<f64>,
    mu: DMatrix<f64>,
    loadings: Loadings,
    noise: Noise,
}

impl MixtureParams {
    /// Validating constructor. `mu` is `G x p`.
    pub fn new(pi: DVector<f64>, mu: DMatrix<f64>, loadings: Loadings, noise: Noise) -> Result<Self> {
        let params = MixtureParams {
            pi,
            mu,
            loadings,
            noise,
        };
        params.validate()?;
        Ok(params)
    }

    pub(crate) fn from_parts(pi: DVector<f64>, mu: DMatrix<f64>, loadings: Loadings, noise: Noise) -> Self {
        MixtureParams {
            pi,
            mu,
            loadings,
            noise,
        }
    }

    fn validate(&self) -> Result<()> {
        let g = self.pi.len();
        if g == 0 {
            return Err(Error::InvalidInput("at least one component required".into()));
        }
        if self.mu.nrows() != g {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} rows for {g} components",
                self.mu.nrows()
            )));
        }
        if self.pi.iter().any(|&v| !(v > 0.0)) || (self.pi.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "mixing proportions must be positive and sum to 1, got {:?}",
                self.pi.as_slice()
            )));
        }
        let p = self.mu.ncols();
        let mats: Vec<&DMatrix<f64>> = match &self.loadings {
            Loadings::Shared(m) => vec![m],
            Loadings::PerGroup(ms) => {
                if ms.len() != g {
                    return Err(Error::DimensionMismatch(format!(
                        "{} loading matrices for {g} components",
                        ms.len()
                    )));
                }
                ms.iter().collect()
            }
        };
        let q = mats[0].ncols();
        if mats.iter().any(|m| m.nrows() != p || m.ncols() != q) {
            return Err(Error::DimensionMismatch("loading matrices must all be p x q".into()));
        }
        let noise_ok = match &self.noise {
            Noise::SharedIsotropic(_) => true,
            Noise::SharedDiagonal(d) => d.len() == p,
            Noise::GroupIsotropic(v) => v.len() == g,
            Noise::GroupDiagonal(ds) => ds.len() == g && ds.iter().all(|d| d.len() == p),
        };
        if !noise_ok {
            return Err(Error::DimensionMismatch("noise storage does not match G and p".into()));
        }
        if self.noise.slots().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("noise variances must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.pi.len()
    }

    pub fn p(&self) -> usize {
        self.mu.ncols()
    }

    pub fn q(&self) -> usize {
        self.loading(0).ncols()
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    /// Component means, `G x p`.
    pub fn mu(&self) -> &DMatrix<f64> {
        &self.mu
    }

    pub fn loadings(&self) -> &Loadings {
        &self.loadings
    }

    pub fn noise(&self) -> &Noise {
        &self.noise
    }

    /// The covariance code implied by the storage layout.
    pub fn code(&self) -> CovarianceCode {
        let c = |b: bool| {
            if b {
                Constraint::Constrained
            } else {
                Constraint::Unconstrained
            }
        };
        let (shared, iso) = match self.noise {
            Noise::SharedIsotropic(_) => (true, true),
            Noise::SharedDiagonal(_) => (true, false),
            Noise::GroupIsotropic(_) => (false, true),
            Noise::GroupDiagonal(_) => (false, false),
        };
        CovarianceCode {
            loadings: c(matches!(self.loadings, Loadings::Shared(_))),
            noise_shared: c(shared),
            isotropic: c(iso),
        }
    }

    pub fn loading(&self, g: usize) -> &DMatrix<f64> {
        match &self.loadings {
            Loadings::Shared(m) => m,
            Loadings::PerGroup(ms) => &ms[g],
        }
    }

    pub fn noise_at(&self, g: usize, j: usize) -> f64 {
        self.noise.at(g, j)
    }

    /// Diagonal of `Psi_g` as a dense vector.
    pub fn noise_diag(&self, g: usize) -> DVector<f64> {
        DVector::from_fn(self.p(), |j, _| self.noise.at(g, j))
    }

    /// `Sigma_g 1 = Lambda_g (Lambda_g' 1) + psi_g`, without forming `Sigma_g`.
    pub fn sigma_row_sums(&self, g: usize) -> DVector<f64> {
        let lambda = self.loading(g);
        let col_sums = DVector::from_fn(lambda.ncols(), |k, _| lambda.column(k).sum());
        let mut out = lambda * col_sums;
        for j in 0..out.len() {
            out[j] += self.noise.at(g, j);
        }
        out
    }

    /// Diagonal of `Sigma_g`: `sum_k lambda_jk^2 + psi_j`.
    pub fn sigma_diag(&self, g: usize) -> DVector<f64> {
        let lambda = self.loading(g);
        DVector::from_fn(self.p(), |j, _| {
            lambda.row(j).iter().map(|v| v * v).sum::<f64>() + self.noise.at(g, j)
        })
    }

    /// Dense `Lambda_g Lambda_g' + Psi_g`. O(p^2); meant for diagnostics and tests.
    pub fn dense_covariance(&self, g: usize) -> DMatrix<f64> {
        let lambda = self.loading(g);
        let mut sigma = lambda * lambda.transpose();
        for j in 0..self.p() {
            sigma[(j, j)] += self.noise.at(g, j);
        }
        sigma
    }

    /// Same parameters with components reordered: new component `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParams {
        let g = self.groups();
        assert_eq!(perm.len(), g);
        let pi = DVector::from_fn(g, |k, _| self.pi[perm[k]]);
        let mu = DMatrix::from_fn(g, self.p(), |k, j| self.mu[(perm[k], j)]);
        let loadings = match &self.loadings {
            Loadings::Shared(m) => Loadings::Shared(m.clone()),
            Loadings::PerGroup(ms) => Loadings::PerGroup(perm.iter().map(|&k| ms[k].clone()).collect()),
        };
        let noise = match &self.noise {
            Noise::GroupIsotropic(v) => Noise::GroupIsotropic(perm.iter().map(|&k| v[k]).collect()),
            Noise::GroupDiagonal(ds) => Noise::GroupDiagonal(perm.iter().map(|&k| ds[k].clone()).collect()),
            shared => shared.clone(),
        };
        MixtureParams::from_parts(pi, mu, loadings, noise)
    }

    pub(crate) fn set_pi_mu(&mut self, pi: DVector<f64>, mu: DMatrix<f64>) {
        self.pi = pi;
        self.mu = mu;
    }

    pub(crate) fn set_covariance(&mut self, loadings: Loadings, noise: Noise) {
        self.loadings = loadings;
        self.noise = noise;
    }

    /// Number of mean coordinates per group that are not exactly zero.
    pub fn nonzero_mean_counts(&self) -> Vec<usize> {
        (0..self.groups())
            .map(|g| self.mu.row(g).iter().filter(|&&v| v != 0.0).count())
            .collect()
    }
}

/// `n x G` posterior membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    z: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        if z.ncols() == 0 || z.nrows() == 0 {
            return Err(Error::InvalidInput("empty responsibility matrix".into()));
        }
        for (i, row) in z.row_iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Domain(format!("row {i} has entries outside [0, 1]")));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} sums to {}", row.sum())));
            }
        }
        Ok(Responsibilities { z })
    }

    pub(crate) fn from_matrix(z: DMatrix<f64>) -> Self {
        Responsibilities { z }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn groups(&self) -> usize {
        self.z.ncols()
    }

    /// Responsibility mass `n_g = sum_i z_ig` per component.
    pub fn column_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.groups(), |g, _| self.z.column(g).sum())
    }

    /// Maximum a posteriori labels (0-based); ties go to the lower index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.z
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for g in 1..row.len() {
                    if row[g] > row[best] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }

    /// One-hot responsibilities for a label vector.
    pub fn from_labels(labels: &[usize], groups: usize) -> Result<Self> {
        if labels.iter().any(|&l| l >= groups) {
            return Err(Error::InvalidInput(format!("label exceeds {groups} groups")));
        }
        Ok(Responsibilities {
            z: DMatrix::from_fn(labels.len(), groups, |i, g| if labels[i] == g { 1.0 } else { 0.0 }),
        })
    }
}
