//! Three-group Gaussian benchmark generator.
//!
//! Group `g` is drawn from `N(level_g * 1, Sigma_g)` where `Sigma_g` is one of
//! * isotropic: `I`
//! * diagonal: `diag(u_j)`, `u_j ~ Uniform(0.5, 1.5)`
//! * full: `A A' / p + 0.1 I`, `A` a `p x p` standard normal matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Isotropic,
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub size: usize,
    /// Every coordinate of the group mean equals this level.
    pub level: f64,
    pub kind: CovarianceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub groups: Vec<GroupSpec>,
    pub seed: u64,
}

impl SimSpec {
    /// Sizes (40, 30, 30), levels (-5.5, 2, 3), covariances isotropic,
    /// diagonal and full.
    pub fn three_group(p: usize, seed: u64) -> Self {
        SimSpec {
            p,
            groups: vec![
                GroupSpec {
                    size: 40,
                    level: -5.5,
                    kind: CovarianceKind::Isotropic,
                },
                GroupSpec {
                    size: 30,
                    level: 2.0,
                    kind: CovarianceKind::Diagonal,
                },
                GroupSpec {
                    size: 30,
                    level: 3.0,
                    kind: CovarianceKind::Full,
                },
            ],
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidInput("p must be positive".into()));
        }
        if self.groups.is_empty() || self.groups.iter().any(|g| g.size == 0) {
            return Err(Error::InvalidInput("group sizes must be positive".into()));
        }
        if self.n() < 2 {
            return Err(Error::InvalidInput("need at least two observations".into()));
        }
        if self.groups.iter().any(|g| !g.level.is_finite()) {
            return Err(Error::InvalidInput("group levels must be finite".into()));
        }
        Ok(())
    }
}

fn draw_rows<R: Rng + ?Sized>(out: &mut DMatrix<f64>, first: usize, group: &GroupSpec, p: usize, rng: &mut R) {
    let normal = |r: &mut R| -> f64 { StandardNormal.sample(r) };
    match group.kind {
        CovarianceKind::Isotropic => {
            for i in first..first + group.size {
                for j in 0..p {
                    out[(i, j)] = group.level + normal(rng);
                }
            }
        }
        CovarianceKind::Diagonal => {
            let spread = Uniform::new(0.5_f64, 1.5).expect("valid range");
            let sd: Vec<f64> = (0..p).map(|_| spread.sample(rng).sqrt()).collect();
            for i in first..first + group.size {
                for j in 0..p {
                    out[(i, j)] = group.level + sd[j] * normal(rng);
                }
            }
        }
        CovarianceKind::Full => {
            // x = level + A w / sqrt(p) + sqrt(0.1) e has covariance A A'/p + 0.1 I
            let a = DMatrix::from_fn(p, p, |_, _| normal(rng));
            let scale = 1.0 / (p as f64).sqrt();
            let noise_sd = 0.1f64.sqrt();
            for i in first..first + group.size {
                let w = DVector::from_fn(p, |_, _| normal(rng));
                let shared = &a * w;
                for j in 0..p {
                    out[(i, j)] = group.level + scale * shared[j] + noise_sd * normal(rng);
                }
            }
        }
    }
}

/// Generates data and 0-based labels (group `g` gets label `g`).
pub fn simulate(spec: &SimSpec) -> Result<(DataMatrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[]);
    let n = spec.n();
    let mut values = DMatrix::zeros(n, spec.p);
    let mut labels = Vec::with_capacity(n);
    let mut first = 0;
    for (g, group) in spec.groups.iter().enumerate() {
        draw_rows(&mut values, first, group, spec.p, &mut rng);
        labels.extend(std::iter::repeat_n(g, group.size));
        first += group.size;
    }
    Ok((DataMatrix::new(values)?, labels))
}
