//! Seroprevalence under covariate-dependent sampling and outcome missingness.
//!
//! The pipeline: a logistic infection model over categorical covariates, an
//! imperfect serological test, a synthetic population built from a study
//! sample by iterative proportional fitting, inverse-probability subsampling
//! back to the study size (with the study's missingness pattern reimposed),
//! and the classical estimators (Rogan-Gladen, inverse probability weighting,
//! bootstrap).

pub mod conjugate;
pub mod estimators;
pub mod generator;
pub mod ipf;
pub mod model;
pub mod pipeline;
pub mod population;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use estimators::{bootstrap_estimate, ipw_prevalence, rogan_gladen, unadjusted_prevalence, BootstrapResult};
pub use ipf::{ipf_weights, IpfOptions};
pub use model::{apply_misclassification, simulate_infections};
pub use population::{build_synthetic_population, subsample_biased, SyntheticPopulation};

/// Number of covariate dimensions: sex, age group, country of birth, household size.
pub const N_DIMS: usize = 4;
pub const MISSING: i32 = -1;

/// One categorical covariate dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateDim {
    pub name: String,
    pub labels: Vec<String>,
    /// Index of the reference category (log-odds ratio fixed at 0).
    pub reference: usize,
}

impl CovariateDim {
    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub dims: [CovariateDim; N_DIMS],
}

impl CovariateSchema {
    pub fn cardinalities(&self) -> [usize; N_DIMS] {
        core::array::from_fn(|d| self.dims[d].cardinality())
    }

    /// Number of log-odds ratios (non-reference categories over all dimensions).
    pub fn n_effects(&self) -> usize {
        self.dims.iter().map(|d| d.cardinality() - 1).sum()
    }

    /// Position of each (dimension, category) in the effect vector; `None`
    /// for reference categories.
    pub fn effect_index(&self, dim: usize, category: usize) -> Option<usize> {
        let d = &self.dims[dim];
        if category == d.reference {
            return None;
        }
        let offset: usize = self.dims[..dim].iter().map(|d| d.cardinality() - 1).sum();
        Some(offset + if category < d.reference { category } else { category - 1 })
    }

    pub fn validate(&self, rec: &CovariateRecord) -> Result<()> {
        for (d, &c) in rec.codes.iter().enumerate() {
            if c != MISSING && (c < 0 || c as usize >= self.dims[d].cardinality()) {
                return Err(Error::Precondition(alloc::format!(
                    "code {c} outside the {} categories of '{}'",
                    self.dims[d].cardinality(),
                    self.dims[d].name
                )));
            }
        }
        Ok(())
    }

    /// Number of distinct complete covariate combinations.
    pub fn n_strata(&self) -> usize {
        self.cardinalities().iter().product()
    }

    pub fn stratum(&self, rec: &CovariateRecord) -> usize {
        let card = self.cardinalities();
        let mut s = 0;
        for d in 0..N_DIMS {
            s = s * card[d] + rec.codes[d] as usize;
        }
        s
    }

    /// Default schema: sex (male reference), six age groups (20-34 reference),
    /// country of birth (Germany reference), household size (single reference).
    pub fn default_schema() -> Self {
        fn dim(name: &str, labels: &[&str], reference: usize) -> CovariateDim {
            CovariateDim {
                name: name.into(),
                labels: labels.iter().map(|s| String::from(*s)).collect(),
                reference,
            }
        }
        Self {
            dims: [
                dim("sex", &["male", "female"], 0),
                dim("age_group", &["14-19", "20-34", "35-49", "50-64", "65-79", "80+"], 1),
                dim("country", &["germany", "other"], 0),
                dim("hh_size", &["1", "2", "3-4", "5+"], 0),
            ],
        }
    }
}

/// Categorical covariates; `-1` marks a missing value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CovariateRecord {
    pub codes: [i32; N_DIMS],
}

impl CovariateRecord {
    pub fn new(sex: i32, age_group: i32, country_of_birth: i32, household_size: i32) -> Self {
        Self {
            codes: [sex, age_group, country_of_birth, household_size],
        }
    }
    pub fn sex(&self) -> i32 {
        self.codes[0]
    }
    pub fn age_group(&self) -> i32 {
        self.codes[1]
    }
    pub fn country_of_birth(&self) -> i32 {
        self.codes[2]
    }
    pub fn household_size(&self) -> i32 {
        self.codes[3]
    }
    pub fn is_complete(&self) -> bool {
        self.codes.iter().all(|&c| c != MISSING)
    }
}

/// Intercept and log-odds ratios, ordered as [`CovariateSchema::effect_index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceParams {
    pub beta0: f64,
    pub beta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCharacteristics {
    pub sensitivity: f64,
    pub specificity: f64,
}

impl TestCharacteristics {
    pub fn new(sensitivity: f64, specificity: f64) -> Result<Self> {
        let t = Self {
            sensitivity,
            specificity,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let (se, sp) = (self.sensitivity, self.specificity);
        if !((0.0..=1.0).contains(&se) && (0.0..=1.0).contains(&sp)) {
            return Err(domain!("sensitivity and specificity must lie in [0, 1]"));
        }
        if se + sp <= 1.0 {
            return Err(domain!("Se + Sp must exceed 1 (got {})", se + sp));
        }
        Ok(())
    }

    pub fn perfect() -> Self {
        Self {
            sensitivity: 1.0,
            specificity: 1.0,
        }
    }

    /// Antibody test used for the default configuration.
    pub fn default_serology() -> Self {
        Self {
            sensitivity: 0.886,
            specificity: 0.997,
        }
    }

    /// `P(y = 1)` for latent prevalence `rho`.
    pub fn apparent(&self, rho: f64) -> f64 {
        self.sensitivity * rho + (1.0 - self.specificity) * (1.0 - rho)
    }
}

/// Target population margins, one probability vector per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub margins: [Vec<f64>; N_DIMS],
}

impl MarginTable {
    pub fn new(margins: [Vec<f64>; N_DIMS]) -> Result<Self> {
        let t = Self { margins };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (d, m) in self.margins.iter().enumerate() {
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > 1e-9 || m.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Config(alloc::format!("margin {d} must be a probability vector (sum {s})")));
            }
        }
        Ok(())
    }

    pub fn check_schema(&self, schema: &CovariateSchema) -> Result<()> {
        for d in 0..N_DIMS {
            if self.margins[d].len() != schema.dims[d].cardinality() {
                return Err(Error::Config(alloc::format!(
                    "margin for '{}' has {} entries, schema declares {}",
                    schema.dims[d].name,
                    self.margins[d].len(),
                    schema.dims[d].cardinality()
                )));
            }
        }
        Ok(())
    }

    /// Synthetic default margins matching [`CovariateSchema::default_schema`].
    pub fn default_synthetic() -> Self {
        Self {
            margins: [
                alloc::vec![0.49, 0.51],
                alloc::vec![0.07, 0.27, 0.23, 0.21, 0.15, 0.07],
                alloc::vec![0.72, 0.28],
                alloc::vec![0.28, 0.30, 0.30, 0.12],
            ],
        }
    }
}

/// One study participant: covariates and observed test outcome (`-1` missing).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub covariates: CovariateRecord,
    pub y: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub records: Vec<CohortRecord>,
    pub epoch: u32,
    pub sampling_weights: Option<Vec<f64>>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.y == MISSING).count() as f64 / self.records.len() as f64
    }

    pub fn covariates(&self) -> Vec<CovariateRecord> {
        self.records.iter().map(|r| r.covariates).collect()
    }
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_indices_skip_references() {
        let s = CovariateSchema::default_schema();
        assert_eq!(s.n_effects(), 1 + 5 + 1 + 3);
        assert_eq!(s.effect_index(0, 0), None);
        assert_eq!(s.effect_index(0, 1), Some(0));
        assert_eq!(s.effect_index(1, 0), Some(1));
        assert_eq!(s.effect_index(1, 1), None);
        assert_eq!(s.effect_index(1, 2), Some(2));
        assert_eq!(s.effect_index(3, 3), Some(9));
    }

    #[test]
    fn margins_must_sum_to_one() {
        assert!(MarginTable::default_synthetic().validate().is_ok());
        let mut bad = MarginTable::default_synthetic();
        bad.margins[0][0] = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rogan_gladen_invertibility_required() {
        assert!(TestCharacteristics::new(0.5, 0.5).is_err());
        assert!(TestCharacteristics::new(0.886, 0.997).is_ok());
    }
}
