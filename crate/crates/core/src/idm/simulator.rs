//! Joint simulator over study epochs for the illness-death model.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::censoring::{censor_full_data, draw_visits, censor_with_visits, VisitConfig};
use super::trajectory::simulate_trajectory;
use super::{IdmParams, IdmPrior, IdmRecord, IdmSubject, MeanCovariates, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::npe::set::EncodedSet;
use crate::randkit::RngStream;
use crate::sim::JointSimulator;
use crate::transform::{Bijection, ParamTransform};

pub const ROW_DIM: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmConfig {
    pub cohort_size: usize,
    /// One visit schedule per epoch.
    pub visits: Vec<VisitConfig>,
    pub sex_prob: f64,
    pub age_sd: f64,
    pub prior: IdmPrior,
    /// `false` keeps only administrative censoring.
    pub visit_censoring: bool,
}

impl Default for IdmConfig {
    fn default() -> Self {
        Self {
            cohort_size: 2299,
            visits: vec![VisitConfig::default(); 4],
            sex_prob: 0.55,
            age_sd: 7.0,
            prior: IdmPrior::default(),
            visit_censoring: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdmDataset {
    pub epoch: u32,
    pub subjects: Vec<IdmSubject>,
    pub records: Vec<IdmRecord>,
}

/// Covariates are drawn once per epoch at construction and reused by every
/// simulated dataset, standing in for a fixed study cohort.
#[derive(Clone, Debug)]
pub struct IdmSimulator {
    pub cfg: IdmConfig,
    pub cohorts: Vec<Vec<IdmSubject>>,
}

impl IdmSimulator {
    pub fn new(cfg: IdmConfig, rng: &RngStream) -> Result<Self> {
        if cfg.cohort_size == 0 || cfg.visits.is_empty() {
            return Err(Error::Config("cohort_size and the epoch list must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&cfg.sex_prob) || !(cfg.age_sd >= 0.0) {
            return Err(Error::Config("sex_prob must lie in [0, 1] and age_sd be nonnegative".into()));
        }
        for v in &cfg.visits {
            v.validate()?;
        }
        let cohorts = (0..cfg.visits.len())
            .map(|e| {
                let mut r = rng.derive(e as u64);
                let mut subjects: Vec<IdmSubject> = (0..cfg.cohort_size)
                    .map(|_| IdmSubject {
                        sex: r.bernoulli(cfg.sex_prob) as u8,
                        age: cfg.age_sd * r.std_normal(),
                        epoch: e as u32 + 1,
                    })
                    .collect();
                let m = subjects.iter().map(|s| s.age).sum::<f64>() / subjects.len() as f64;
                subjects.iter_mut().for_each(|s| s.age -= m);
                subjects
            })
            .collect();
        Ok(Self { cfg, cohorts })
    }

    pub fn n_epochs(&self) -> usize {
        self.cfg.visits.len()
    }

    pub fn mean_covariates(&self, epoch_index: usize) -> MeanCovariates {
        let c = &self.cohorts[epoch_index];
        let n = c.len() as f64;
        MeanCovariates {
            sex: c.iter().map(|s| s.sex as f64).sum::<f64>() / n,
            age: c.iter().map(|s| s.age).sum::<f64>() / n,
        }
    }

    /// Forward model for fixed parameters in epoch `epoch_index` (0-based).
    /// Visit draws are consumed even with censoring switched off, so both
    /// modes see the same latent trajectories for a given stream.
    pub fn simulate(&self, params: &IdmParams, epoch_index: usize, rng: &mut RngStream) -> Result<IdmDataset> {
        params.validate()?;
        let cfg = self
            .cfg
            .visits
            .get(epoch_index)
            .ok_or_else(|| Error::Precondition(alloc::format!("epoch {epoch_index} out of range")))?;
        let subjects = self.cohorts[epoch_index].clone();
        let records = subjects
            .iter()
            .map(|s| {
                let tr = simulate_trajectory(params, s, rng);
                let v = draw_visits(cfg, rng);
                if self.cfg.visit_censoring {
                    censor_with_visits(&tr, &v, cfg.epoch_length)
                } else {
                    censor_full_data(&tr, cfg.epoch_length)
                }
            })
            .collect();
        Ok(IdmDataset {
            epoch: epoch_index as u32 + 1,
            subjects,
            records,
        })
    }

    /// Same simulator with the opposite censoring mode.
    pub fn with_visit_censoring(&self, enabled: bool) -> Self {
        let mut s = self.clone();
        s.cfg.visit_censoring = enabled;
        s
    }
}

/// Row layout `illness_time, illness_ind, death_time, death_ind, sex, age,
/// epoch`; the condition is the one-hot epoch.
pub fn encode_idm(ds: &IdmDataset, n_epochs: usize) -> Result<EncodedSet> {
    let e = ds.epoch as usize;
    if e == 0 || e > n_epochs || ds.subjects.len() != ds.records.len() {
        return Err(Error::Encoding("epoch out of range or subject/record count mismatch".into()));
    }
    let mut rows = Vec::with_capacity(ds.records.len() * ROW_DIM);
    for (s, r) in ds.subjects.iter().zip(&ds.records) {
        rows.extend_from_slice(&[
            r.illness_time,
            r.illness_observed as u8 as f64,
            r.death_time,
            r.death_observed as u8 as f64,
            s.sex as f64,
            s.age,
            ds.epoch as f64,
        ]);
    }
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::Encoding("non-finite record value".into()));
    }
    let mut condition = vec![0.0; n_epochs];
    condition[e - 1] = 1.0;
    Ok(EncodedSet::flat(ROW_DIM, rows, condition)?.canonical())
}

impl JointSimulator for IdmSimulator {
    type Obs = IdmDataset;

    fn param_names(&self) -> Vec<String> {
        PARAM_NAMES.iter().map(|s| String::from(*s)).collect()
    }

    fn transform(&self) -> ParamTransform {
        let mut maps = vec![Bijection::Log; 6];
        maps.extend([Bijection::Identity; 6]);
        ParamTransform::new(maps)
    }

    fn n_conditions(&self) -> usize {
        self.n_epochs()
    }

    fn row_dim(&self) -> usize {
        ROW_DIM
    }

    fn condition_dim(&self) -> usize {
        self.n_epochs()
    }

    fn draw(&self, condition: usize, rng: &mut RngStream) -> Result<(Vec<f64>, IdmDataset)> {
        let p = self.cfg.prior.sample(rng);
        let ds = self.simulate(&p, condition, rng)?;
        Ok((p.to_vec(), ds))
    }

    fn encode(&self, obs: &IdmDataset) -> Result<EncodedSet> {
        encode_idm(obs, self.n_epochs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::Transition;

    fn sim(censor: bool) -> IdmSimulator {
        let cfg = IdmConfig { cohort_size: 300, visit_censoring: censor, ..Default::default() };
        IdmSimulator::new(cfg, &RngStream::new(1, 0)).unwrap()
    }

    #[test]
    fn reproducible_and_mode_switch_shares_trajectories() {
        let s = sim(true);
        let a = s.draw(1, &mut RngStream::new(3, 3)).unwrap();
        let b = s.draw(1, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a, b);
        let full = s.with_visit_censoring(false).draw(1, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a.0, full.0);
        for (c, f) in a.1.records.iter().zip(&full.1.records) {
            if c.death_observed {
                assert!(f.death_observed && f.death_time == c.death_time);
            }
            if c.illness_observed {
                assert!(f.illness_observed && f.illness_time <= c.illness_time);
            }
        }
    }

    #[test]
    fn censoring_reduces_observed_illness() {
        let s = sim(true);
        let f = s.with_visit_censoring(false);
        let p = IdmParams {
            scale: [4e-4, 4e-4, 3e-3],
            shape: [1.0, 1.0, 1.0],
            beta_sex: [0.0; 3],
            beta_age: [0.0; 3],
        };
        let (mut obs, mut latent) = (0, 0);
        for k in 0..20 {
            let c = s.simulate(&p, 0, &mut RngStream::new(5, k)).unwrap();
            let l = f.simulate(&p, 0, &mut RngStream::new(5, k)).unwrap();
            obs += c.records.iter().filter(|r| r.illness_observed).count();
            latent += l.records.iter().filter(|r| r.illness_observed).count();
        }
        assert!(obs < latent, "{obs} vs {latent}");
        let _ = Transition::ALL;
    }

    #[test]
    fn encoding_shape() {
        let s = sim(true);
        let (_, ds) = s.draw(2, &mut RngStream::new(4, 0)).unwrap();
        let e = s.encode(&ds).unwrap();
        assert_eq!(e.row_dim, 7);
        assert_eq!(e.condition, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(e.weights.iter().sum::<f64>(), 300.0);
        let age_mean: f64 = s.cohorts[2].iter().map(|x| x.age).sum::<f64>() / 300.0;
        assert!(age_mean.abs() < 1e-12);
    }
}
