//! Declarative descriptions of the selection mechanisms embedded in the
//! simulators.
//!
//! A selection mechanism decides which simulated units end up in the data the
//! estimator sees. Its missingness type determines whether a likelihood that
//! ignores it can still be trusted:
//!
//! * [`Missingness::Mcar`]: selection depends on nothing observed or
//!   unobserved; it can be ignored.
//! * [`Missingness::Mar`]: selection depends only on observed outcomes or
//!   covariates. Parameters of the outcome model are unaffected, but
//!   population-level quantities still need the covariate shift corrected.
//! * [`Missingness::Mnar`]: selection depends on unobserved values; the
//!   mechanism has to be simulated and marginalized.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Missingness {
    Mcar,
    Mar,
    Mnar,
}

/// Household study-inclusion scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Random,
    Child,
    Adult,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Random, Scheme::Child, Scheme::Adult];

    pub fn index(self) -> usize {
        match self {
            Scheme::Random => 0,
            Scheme::Child => 1,
            Scheme::Adult => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Random => "random",
            Scheme::Child => "child",
            Scheme::Adult => "adult",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|x| x.name().eq_ignore_ascii_case(s))
    }

    /// Whether a positive member of this age may serve as inclusion case.
    pub fn admits(self, age_years: f64) -> bool {
        match self {
            Scheme::Random => true,
            Scheme::Child => age_years < 18.0,
            Scheme::Adult => age_years >= 18.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionConfig {
    /// Inverse-probability subsampling from an IPF-weighted synthetic
    /// population, optionally with the source study's outcome missingness.
    BiasedSubsample { outcome_missingness: bool },
    /// Dementia observed only at study visits (masked by death), with dropout.
    /// `enabled = false` keeps only administrative censoring.
    VisitCensoring { enabled: bool },
    /// Outcome-dependent household inclusion.
    HouseholdInclusion { scheme: Scheme },
}

impl SelectionConfig {
    pub fn missingness(&self) -> Missingness {
        match *self {
            SelectionConfig::BiasedSubsample { .. } => Missingness::Mar,
            SelectionConfig::VisitCensoring { enabled: true } => Missingness::Mnar,
            SelectionConfig::VisitCensoring { enabled: false } => Missingness::Mcar,
            SelectionConfig::HouseholdInclusion { scheme: Scheme::Random } => Missingness::Mar,
            SelectionConfig::HouseholdInclusion { .. } => Missingness::Mnar,
        }
    }
}
