//! PGMM covariance-structure codes and grid-cell descriptors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One letter of a covariance code: `C`onstrained or `U`nconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    Constrained,
    Unconstrained,
}

impl Constraint {
    fn letter(self) -> char {
        match self {
            Constraint::Constrained => 'C',
            Constraint::Unconstrained => 'U',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'C' => Some(Constraint::Constrained),
            'U' => Some(Constraint::Unconstrained),
            _ => None,
        }
    }

    pub fn is_constrained(self) -> bool {
        self == Constraint::Constrained
    }
}

/// Three-letter PGMM code.
///
/// Position 1: loadings shared across groups. Position 2: noise shared across
/// groups. Position 3: noise isotropic within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CovarianceCode {
    pub loadings: Constraint,
    pub noise_shared: Constraint,
    pub isotropic: Constraint,
}

impl CovarianceCode {
    pub const ALL: [&'static str; 8] = ["CCC", "CCU", "CUC", "CUU", "UCC", "UCU", "UUC", "UUU"];

    pub fn all() -> Vec<CovarianceCode> {
        Self::ALL.iter().map(|s| s.parse().unwrap()).collect()
    }

    pub fn shared_loadings(&self) -> bool {
        self.loadings.is_constrained()
    }

    pub fn shared_noise(&self) -> bool {
        self.noise_shared.is_constrained()
    }

    pub fn isotropic_noise(&self) -> bool {
        self.isotropic.is_constrained()
    }

    pub fn as_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CovarianceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}",
            self.loadings.letter(),
            self.noise_shared.letter(),
            self.isotropic.letter()
        )
    }
}

impl FromStr for CovarianceCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<Constraint> = s
            .trim()
            .chars()
            .map(Constraint::from_letter)
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidCode(s.to_string()))?;
        match letters.as_slice() {
            &[loadings, noise_shared, isotropic] => Ok(CovarianceCode {
                loadings,
                noise_shared,
                isotropic,
            }),
            _ => Err(Error::InvalidCode(s.to_string())),
        }
    }
}

impl PartialOrd for CovarianceCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CovarianceCode {
    // 'C' < 'U', so this is the lexicographic order of the code strings.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.loadings, self.noise_shared, self.isotropic).cmp(&(other.loadings, other.noise_shared, other.isotropic))
    }
}

impl Serialize for CovarianceCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CovarianceCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One cell of the search grid: covariance code, number of components and
/// number of latent factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub code: CovarianceCode,
    #[serde(rename = "G")]
    pub groups: usize,
    pub q: usize,
}

impl ModelDescriptor {
    pub fn new(code: CovarianceCode, groups: usize, q: usize) -> Self {
        ModelDescriptor { code, groups, q }
    }

    pub fn parse(code: &str, groups: usize, q: usize) -> Result<Self> {
        Ok(ModelDescriptor::new(code.parse()?, groups, q))
    }

    /// Checks the descriptor against a data set with `n` rows and `p` columns.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::InvalidInput("G must be at least 1".into()));
        }
        if self.q == 0 || self.q >= p {
            return Err(Error::InvalidInput(format!(
                "q = {} must satisfy 1 <= q < p = {p}",
                self.q
            )));
        }
        if self.groups > n {
            return Err(Error::InvalidInput(format!("G = {} exceeds n = {n}", self.groups)));
        }
        Ok(())
    }

    /// Grid ordering used for tie-breaking: smaller G, then smaller q, then code.
    pub fn parsimony_key(&self) -> (usize, usize, CovarianceCode) {
        (self.groups, self.q, self.code)
    }

    /// Full grid in deterministic order (G, then q, then code).
    pub fn grid(
        groups: impl IntoIterator<Item = usize>,
        factors: impl IntoIterator<Item = usize> + Clone,
        codes: &[CovarianceCode],
    ) -> Vec<ModelDescriptor> {
        let mut out = Vec::new();
        for g in groups {
            for q in factors.clone() {
                for &code in codes {
                    out.push(ModelDescriptor::new(code, g, q));
                }
            }
        }
        out
    }
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} G={} q={}", self.code, self.groups, self.q)
    }
}
