//! Weibull illness-death model: healthy (0), dementia (1), death (2), with
//! visit-based observation of dementia and administrative censoring.
//!
//! Time is measured in days from the start of a five-year study epoch.

pub mod censoring;
pub mod metrics;
pub mod simulator;
pub mod trajectory;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::randkit::{GammaSpec, RngStream};
#[allow(unused_imports)]
use crate::float::Float;

pub use censoring::{apply_visit_censoring, censor_full_data, censor_with_visits, draw_visits, VisitConfig, Visits};
pub use metrics::{nrmse_hazard, Aggregation};
pub use simulator::{IdmConfig, IdmSimulator};
pub use trajectory::{simulate_trajectory, Trajectory};

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    HealthyToIll,
    HealthyToDead,
    IllToDead,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::HealthyToIll, Transition::HealthyToDead, Transition::IllToDead];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::HealthyToIll => "01",
            Transition::HealthyToDead => "02",
            Transition::IllToDead => "12",
        }
    }
}

/// Scales `a`, shapes `kappa` and sex/age log hazard ratios, one entry per
/// [`Transition`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub scale: [f64; 3],
    pub shape: [f64; 3],
    pub beta_sex: [f64; 3],
    pub beta_age: [f64; 3],
}

pub const PARAM_NAMES: [&str; 12] = [
    "a01", "a02", "a12", "kappa01", "kappa02", "kappa12", "beta_sex01", "beta_sex02", "beta_sex12", "beta_age01",
    "beta_age02", "beta_age12",
];

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().chain(&self.shape).any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(domain!("Weibull scales and shapes must be positive and finite"));
        }
        if self.beta_sex.iter().chain(&self.beta_age).any(|x| !x.is_finite()) {
            return Err(domain!("covariate effects must be finite"));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(12);
        v.extend_from_slice(&self.scale);
        v.extend_from_slice(&self.shape);
        v.extend_from_slice(&self.beta_sex);
        v.extend_from_slice(&self.beta_age);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(domain!("illness-death parameters have 12 entries, got {}", v.len()));
        }
        let p = Self {
            scale: [v[0], v[1], v[2]],
            shape: [v[3], v[4], v[5]],
            beta_sex: [v[6], v[7], v[8]],
            beta_age: [v[9], v[10], v[11]],
        };
        Ok(p)
    }

    /// `exp(beta' c)` for transition `kl`.
    pub fn risk(&self, kl: Transition, subject: &IdmSubject) -> f64 {
        let k = kl.index();
        (self.beta_sex[k] * subject.sex as f64 + self.beta_age[k] * subject.age).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmSubject {
    pub sex: u8,
    /// Centered age in years.
    pub age: f64,
    pub epoch: u32,
}

/// Observed follow-up of one subject. Unobserved events carry their
/// censoring time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmRecord {
    pub illness_time: f64,
    pub illness_observed: bool,
    pub death_time: f64,
    pub death_observed: bool,
    pub visit1: f64,
    pub visit2: f64,
}

/// `h_kl(t | c) = a kappa t^(kappa - 1) exp(beta' c)`.
pub fn hazard(t: f64, kl: Transition, params: &IdmParams, subject: &IdmSubject) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain!("hazard needs t >= 0, got {t}"));
    }
    let k = kl.index();
    let (a, kappa) = (params.scale[k], params.shape[k]);
    let base = if kappa == 1.0 { a } else { a * kappa * t.powf(kappa - 1.0) };
    Ok(base * params.risk(kl, subject))
}

/// `A_kl(t | c) = a t^kappa exp(beta' c)`.
pub fn cumulative_hazard(t: f64, kl: Transition, params: &IdmParams, subject: &IdmSubject) -> f64 {
    let k = kl.index();
    params.scale[k] * t.max(0.0).powf(params.shape[k]) * params.risk(kl, subject)
}

/// Cumulative hazard on `grid` at the given (mean) covariates, one curve per
/// transition.
pub fn cumulative_hazard_curve(params: &IdmParams, mean_covariates: &IdmSubject, grid: &[f64]) -> Result<[Vec<f64>; 3]> {
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|&g| g < 0.0) {
        return Err(Error::Precondition("grid must be ascending and nonnegative".into()));
    }
    Ok(core::array::from_fn(|k| {
        grid.iter()
            .map(|&t| cumulative_hazard(t, Transition::ALL[k], params, mean_covariates))
            .collect()
    }))
}

/// Mean sex and age used for covariate-adjusted curves. `sex` is a share.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCovariates {
    pub sex: f64,
    pub age: f64,
}

impl IdmParams {
    pub fn adjusted_cumulative_hazard(&self, kl: Transition, cov: MeanCovariates, t: f64) -> f64 {
        let k = kl.index();
        let r = (self.beta_sex[k] * cov.sex + self.beta_age[k] * cov.age).exp();
        self.scale[k] * t.max(0.0).powf(self.shape[k]) * r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmPrior {
    pub scale: GammaSpec,
    pub shape: GammaSpec,
    pub effect_sd: f64,
}

impl Default for IdmPrior {
    fn default() -> Self {
        Self {
            scale: GammaSpec::from_mean_cv(0.0002993, 1.0).expect("valid prior"),
            shape: GammaSpec::from_mean_cv(1.0, 0.25).expect("valid prior"),
            effect_sd: 1.0,
        }
    }
}

impl IdmPrior {
    pub fn sample(&self, rng: &mut RngStream) -> IdmParams {
        let scale = core::array::from_fn(|_| rng.gamma(self.scale).max(f64::MIN_POSITIVE));
        let shape = core::array::from_fn(|_| rng.gamma(self.shape).max(f64::MIN_POSITIVE));
        let beta_sex = core::array::from_fn(|_| self.effect_sd * rng.std_normal());
        let beta_age = core::array::from_fn(|_| self.effect_sd * rng.std_normal());
        IdmParams {
            scale,
            shape,
            beta_sex,
            beta_age,
        }
    }
}
