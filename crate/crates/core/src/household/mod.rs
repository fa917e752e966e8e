//! Household SARS-CoV-2 transmission with symptom, testing and study
//! inclusion processes.
//!
//! Days are integers counted from the start of the simulation; all dates in
//! study output are shifted by [`StudyConfig::date_shift`].

pub mod dynamics;
pub mod encode;
pub mod simulator;
pub mod stats;
pub mod study;
pub mod testing;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::randkit::{GammaSpec, RngStream};
#[allow(unused_imports)]
use crate::float::Float;

pub use dynamics::{infection_hazard, simulate_dynamics, size_weight, step_day, HouseholdState, KernelTable, Member};
pub use encode::{decode_dataset, encode_dataset, encode_set, person_features, PersonFeatures, MAX_MEMBERS, PERSON_DIM};
pub use simulator::{scheme_condition, HouseholdConfig, HouseholdSimulator};
pub use stats::first_positive_child_fraction;
pub use study::{
    include_household, select_study, simulate_pool, simulate_study, DetectionStatus, ObservedHousehold, ObservedPerson, RawHousehold,
    Scheme, StudyConfig, StudyDataset,
};
pub use testing::{is_positive, testing_process, TestSchedule};

/// Age classes of the transmission model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    /// Under 6 years.
    Infant,
    /// 6 to 11 years.
    Child,
    /// 12 years and older.
    Adult,
}

impl AgeGroup {
    pub fn from_years(age: f64) -> Self {
        if age < 6.0 {
            AgeGroup::Infant
        } else if age < 12.0 {
            AgeGroup::Child
        } else {
            AgeGroup::Adult
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [AgeGroup::Infant, AgeGroup::Child, AgeGroup::Adult].get(c as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Alpha,
    Omicron,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Alpha, Variant::Omicron];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Alpha => "alpha",
            Variant::Omicron => "omicron",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn config(self) -> VariantConfig {
        match self {
            Variant::Alpha => VariantConfig::alpha(),
            Variant::Omicron => VariantConfig::omicron(),
        }
    }
}

/// Variant-specific epidemiological and study constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Generation-time kernel (days).
    pub kernel: GammaSpec,
    pub asym_prob: f64,
    pub incubation: GammaSpec,
    /// Success probability of the delay from symptom onset to test.
    pub symptom_test_p: f64,
    /// Success probability of the delay of a triggered test.
    pub trigger_test_p: f64,
    pub background_test_prob: f64,
    pub inclusion_delay_mean: f64,
    /// Background (community) hazard per day.
    pub alpha: f64,
    pub target_households: usize,
    /// Probability of missing a triggered test for household sizes 2, 3, ...;
    /// sizes beyond the list are unsupported.
    pub miss_prob: Vec<f64>,
}

impl VariantConfig {
    pub fn alpha() -> Self {
        Self {
            variant: Variant::Alpha,
            kernel: GammaSpec::from_shape_rate(2.0, 0.44).expect("valid kernel"),
            asym_prob: 0.4,
            incubation: GammaSpec::from_mean_sd(4.42, 2.30).expect("valid incubation"),
            symptom_test_p: 0.33,
            trigger_test_p: 0.48,
            background_test_prob: 1.0 / 21.0,
            inclusion_delay_mean: 4.8,
            alpha: 0.001,
            target_households: 128,
            miss_prob: alloc::vec![0.00, 0.10, 0.07, 0.14, 0.10, 0.71],
        }
    }

    pub fn omicron() -> Self {
        Self {
            variant: Variant::Omicron,
            kernel: GammaSpec::from_shape_rate(3.351, 1.1098).expect("valid kernel"),
            asym_prob: 0.3,
            incubation: GammaSpec::from_mean_sd(3.09, 1.64).expect("valid incubation"),
            symptom_test_p: 0.33,
            trigger_test_p: 0.46,
            background_test_prob: 1.0 / 14.0,
            inclusion_delay_mean: 2.7,
            alpha: 0.01,
            target_households: 54,
            miss_prob: alloc::vec![0.00, 0.40, 0.24, 0.17, 0.17, 0.14, 0.13],
        }
    }

    pub fn max_household_size(&self) -> usize {
        self.miss_prob.len() + 1
    }

    /// Probability that a member of a household of size `n` misses a
    /// triggered test.
    pub fn miss_probability(&self, n: usize) -> Result<f64> {
        if n < 2 || n > self.max_household_size() {
            return Err(Error::Config(alloc::format!(
                "household size {n} outside the supported range 2..={} for {}",
                self.max_household_size(),
                self.variant.name()
            )));
        }
        Ok(self.miss_prob[n - 2])
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.asym_prob,
            self.symptom_test_p,
            self.trigger_test_p,
            self.background_test_prob,
        ];
        if probs.iter().chain(&self.miss_prob).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("variant probabilities must lie in [0, 1]".into()));
        }
        if self.symptom_test_p == 0.0 || self.trigger_test_p == 0.0 {
            return Err(Error::Config("test delay success probabilities must be positive".into()));
        }
        if !(self.alpha >= 0.0) || !(self.inclusion_delay_mean >= 0.0) || self.target_households == 0 {
            return Err(Error::Config("alpha, inclusion delay and target size must be valid".into()));
        }
        GammaSpec::new(self.kernel.shape, self.kernel.scale)?;
        GammaSpec::new(self.incubation.shape, self.incubation.scale)?;
        Ok(())
    }
}

/// Transmission parameters. Multiplier order: `mu_inf` = (symptomatic
/// infant, symptomatic child, asymptomatic infant, asymptomatic child,
/// asymptomatic adult), `mu_sus` = (infant, child), `mu_pro` =
/// (transmission, acquisition).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdParams {
    pub beta: f64,
    pub delta: f64,
    pub mu_inf: [f64; 5],
    pub mu_sus: [f64; 2],
    pub mu_pro: [f64; 2],
}

pub const PARAM_NAMES: [&str; 11] = [
    "beta",
    "delta",
    "mu_inf_sym_infant",
    "mu_inf_sym_child",
    "mu_inf_asym_infant",
    "mu_inf_asym_child",
    "mu_inf_asym_adult",
    "mu_sus_infant",
    "mu_sus_child",
    "mu_pro_transmission",
    "mu_pro_acquisition",
];

impl HouseholdParams {
    pub fn neutral(beta: f64) -> Self {
        Self {
            beta,
            delta: 0.0,
            mu_inf: [1.0; 5],
            mu_sus: [1.0; 2],
            mu_pro: [1.0; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.delta.is_finite() {
            return Err(domain!("beta must be nonnegative and delta finite"));
        }
        if self.mu_inf.iter().chain(&self.mu_sus).chain(&self.mu_pro).any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(domain!("multipliers must be positive and finite"));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = alloc::vec![self.beta, self.delta];
        v.extend_from_slice(&self.mu_inf);
        v.extend_from_slice(&self.mu_sus);
        v.extend_from_slice(&self.mu_pro);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 11 {
            return Err(domain!("household parameters have 11 entries, got {}", v.len()));
        }
        Ok(Self {
            beta: v[0],
            delta: v[1],
            mu_inf: [v[2], v[3], v[4], v[5], v[6]],
            mu_sus: [v[7], v[8]],
            mu_pro: [v[9], v[10]],
        })
    }

    /// Infectivity of an infector of the given class (symptomatic adult = 1).
    pub fn infectivity(&self, age: AgeGroup, symptomatic: bool) -> f64 {
        match (symptomatic, age) {
            (true, AgeGroup::Infant) => self.mu_inf[0],
            (true, AgeGroup::Child) => self.mu_inf[1],
            (true, AgeGroup::Adult) => 1.0,
            (false, AgeGroup::Infant) => self.mu_inf[2],
            (false, AgeGroup::Child) => self.mu_inf[3],
            (false, AgeGroup::Adult) => self.mu_inf[4],
        }
    }

    pub fn susceptibility(&self, age: AgeGroup) -> f64 {
        match age {
            AgeGroup::Infant => self.mu_sus[0],
            AgeGroup::Child => self.mu_sus[1],
            AgeGroup::Adult => 1.0,
        }
    }

    pub fn protection(&self, infector_protected: bool, susceptible_protected: bool) -> f64 {
        let mut m = 1.0;
        if infector_protected {
            m *= self.mu_pro[0];
        }
        if susceptible_protected {
            m *= self.mu_pro[1];
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdPrior {
    pub beta: GammaSpec,
    pub delta_sd: f64,
    pub multiplier_log_sd: f64,
}

impl Default for HouseholdPrior {
    fn default() -> Self {
        Self {
            beta: GammaSpec { shape: 2.0, scale: 0.5 },
            delta_sd: 1.0,
            multiplier_log_sd: 0.7,
        }
    }
}

impl HouseholdPrior {
    pub fn sample(&self, rng: &mut RngStream) -> HouseholdParams {
        let beta = rng.gamma(self.beta);
        let delta = self.delta_sd * rng.std_normal();
        let mut mult = || (self.multiplier_log_sd * rng.std_normal()).exp();
        let mu_inf = [mult(), mult(), mult(), mult(), mult()];
        let mu_sus = [mult(), mult()];
        let mu_pro = [mult(), mult()];
        HouseholdParams {
            beta,
            delta,
            mu_inf,
            mu_sus,
            mu_pro,
        }
    }

    /// Log prior density in natural space.
    pub fn ln_density(&self, p: &HouseholdParams) -> f64 {
        let ln_norm = |x: f64, sd: f64| crate::randkit::special::norm_ln_pdf(x / sd) - sd.ln();
        let ln_lognorm = |m: f64| {
            if m <= 0.0 {
                f64::NEG_INFINITY
            } else {
                ln_norm(m.ln(), self.multiplier_log_sd) - m.ln()
            }
        };
        let mut s = self.beta.ln_pdf(p.beta) + ln_norm(p.delta, self.delta_sd);
        for &m in p.mu_inf.iter().chain(&p.mu_sus).chain(&p.mu_pro) {
            s += ln_lognorm(m);
        }
        s
    }
}

/// A household member before simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterMember {
    pub age_years: f64,
    pub protected: bool,
}

pub type Roster = Vec<RosterMember>;

/// Synthetic roster generator: sizes drawn from `size_probs` (index 0 =
/// size 2); a two-person household is one adult and one child, larger ones
/// two adults plus children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterConfig {
    pub n_rosters: usize,
    pub size_probs: Vec<f64>,
    pub adult_age: (f64, f64),
    pub child_age: (f64, f64),
    pub adult_protected: f64,
    pub child_protected: f64,
}

impl RosterConfig {
    pub fn for_variant(v: Variant) -> Self {
        let size_probs = match v {
            Variant::Alpha => alloc::vec![0.10, 0.22, 0.33, 0.20, 0.10, 0.05],
            Variant::Omicron => alloc::vec![0.10, 0.22, 0.32, 0.19, 0.09, 0.05, 0.03],
        };
        Self {
            n_rosters: 40,
            size_probs,
            adult_age: (25.0, 55.0),
            child_age: (0.0, 18.0),
            adult_protected: 0.5,
            child_protected: 0.2,
        }
    }

    pub fn generate(&self, rng: &mut RngStream) -> Result<Vec<Roster>> {
        if self.size_probs.is_empty() || self.size_probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("roster size_probs must be nonnegative and nonempty".into()));
        }
        let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.uniform();
        Ok((0..self.n_rosters)
            .map(|_| {
                let size = 2 + rng.categorical(&self.size_probs);
                let adults = if size == 2 { 1 } else { 2 };
                (0..size)
                    .map(|k| {
                        if k < adults {
                            RosterMember {
                                age_years: uniform(rng, self.adult_age),
                                protected: rng.bernoulli(self.adult_protected),
                            }
                        } else {
                            RosterMember {
                                age_years: uniform(rng, self.child_age),
                                protected: rng.bernoulli(self.child_protected),
                            }
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Names for the parameter vector.
pub fn param_names() -> Vec<String> {
    PARAM_NAMES.iter().map(|s| String::from(*s)).collect()
}
