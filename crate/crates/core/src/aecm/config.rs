use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed used when neither a flag nor `LPBIC_SEED` provides one.
pub const DEFAULT_SEED: u64 = 20120601;

/// How the LASSO tuning parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum PenaltyConfig {
    Fixed(f64),
    /// `lambda_n = 1 / p`.
    #[default]
    ReciprocalP,
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyConfig::Fixed(v) if !(v >= 0.0) || !v.is_finite() => {
                Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {v}")))
            }
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PenaltyConfig::Fixed(v) => format!("fixed({v})"),
            PenaltyConfig::ReciprocalP => "1/p".to_string(),
        }
    }
}

pub fn resolve_lambda(penalty: PenaltyConfig, p: usize) -> f64 {
    match penalty {
        PenaltyConfig::Fixed(v) => v,
        PenaltyConfig::ReciprocalP => 1.0 / p as f64,
    }
}

/// Starting responsibilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Rows drawn from a flat Dirichlet.
    RandomSoft,
    /// Hard labels from seeded k-means++ / Lloyd.
    KMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 1000,
            tolerance: 1e-5,
            n_starts: 20,
            seed: DEFAULT_SEED,
            init: Init::KMeans,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerance must be > 0".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidInput("n_starts must be >= 1".into()));
        }
        Ok(())
    }
}
