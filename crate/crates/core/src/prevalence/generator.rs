//! Stand-in for the study file: a base sample whose covariate distribution is
//! skewed away from the population margins, with round-specific outcome
//! missingness that depends on covariates.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Cohort, CohortRecord, CovariateRecord, MarginTable, MISSING, N_DIMS};
use crate::error::{Error, Result};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSampleConfig {
    pub size: usize,
    /// Per-dimension log tilt applied linearly across categories; positive
    /// values over-represent high category codes.
    pub skew: [f64; N_DIMS],
    /// MCAR probability of each covariate being missing.
    pub covariate_missing: f64,
    /// Average fraction of missing outcomes per study round.
    pub round_missing: Vec<f64>,
    /// Log tilt of outcome missingness across categories, per dimension.
    pub missing_tilt: [f64; N_DIMS],
}

impl Default for BaseSampleConfig {
    fn default() -> Self {
        Self {
            size: 1500,
            skew: [0.4, 0.8, -0.7, 0.6],
            covariate_missing: 0.02,
            round_missing: alloc::vec![0.03, 0.08, 0.18, 0.28, 0.40],
            missing_tilt: [0.3, -2.0, 0.8, 1.0],
        }
    }
}

impl BaseSampleConfig {
    pub fn n_rounds(&self) -> usize {
        self.round_missing.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("base sample size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.covariate_missing) {
            return Err(Error::Config("covariate_missing must lie in [0, 1)".into()));
        }
        if self.round_missing.is_empty() || self.round_missing.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Config("round_missing fractions must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

fn linear_score(code: usize, card: usize) -> f64 {
    if card <= 1 {
        0.0
    } else {
        code as f64 / (card - 1) as f64 - 0.5
    }
}

/// One cohort per round sharing the same participants. Missingness is
/// nested: a record missing in round `r` is missing in every later round
/// whose fraction is at least as large.
pub fn generate_base_rounds(cfg: &BaseSampleConfig, margins: &MarginTable, rng: &mut RngStream) -> Result<Vec<Cohort>> {
    cfg.validate()?;
    margins.validate()?;
    let tilted: [Vec<f64>; N_DIMS] = core::array::from_fn(|d| {
        let k = margins.margins[d].len();
        margins.margins[d]
            .iter()
            .enumerate()
            .map(|(c, &p)| p * (cfg.skew[d] * linear_score(c, k)).exp())
            .collect()
    });
    let mut covs = Vec::with_capacity(cfg.size);
    let mut tilt = Vec::with_capacity(cfg.size);
    for _ in 0..cfg.size {
        let mut codes = [0i32; N_DIMS];
        let mut score = 0.0;
        for d in 0..N_DIMS {
            let c = rng.categorical(&tilted[d]);
            score += cfg.missing_tilt[d] * linear_score(c, tilted[d].len());
            codes[d] = c as i32;
        }
        for code in codes.iter_mut() {
            if rng.bernoulli(cfg.covariate_missing) {
                *code = MISSING;
            }
        }
        covs.push(CovariateRecord { codes });
        tilt.push(score.exp());
    }
    let mean_tilt = super::mean(tilt.iter().copied());
    let u: Vec<f64> = (0..cfg.size).map(|_| rng.uniform()).collect();
    Ok(cfg
        .round_missing
        .iter()
        .enumerate()
        .map(|(r, &f)| Cohort {
            records: covs
                .iter()
                .zip(&tilt)
                .zip(&u)
                .map(|((&c, &t), &ui)| CohortRecord {
                    covariates: c,
                    y: if ui < (f * t / mean_tilt).min(1.0) { MISSING } else { 0 },
                })
                .collect(),
            epoch: r as u32 + 1,
            sampling_weights: None,
        })
        .collect())
}
