//! Joint simulator over prior, transmission, testing and study inclusion.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::encode::{encode_set, PERSON_DIM};
use super::study::{simulate_study, Scheme, StudyConfig, StudyDataset};
use super::{HouseholdParams, HouseholdPrior, Roster, RosterConfig, Variant, VariantConfig, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::npe::set::EncodedSet;
use crate::randkit::RngStream;
use crate::sim::JointSimulator;
use crate::transform::{Bijection, ParamTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdConfig {
    pub variant: VariantConfig,
    pub rosters: RosterConfig,
    pub study: StudyConfig,
    pub prior: HouseholdPrior,
    /// Households per study; defaults to the variant's target size.
    pub n_households: Option<usize>,
}

impl HouseholdConfig {
    pub fn for_variant(v: Variant) -> Self {
        Self {
            variant: v.config(),
            rosters: RosterConfig::for_variant(v),
            study: StudyConfig::default(),
            prior: HouseholdPrior::default(),
            n_households: None,
        }
    }

    pub fn n_households(&self) -> usize {
        self.n_households.unwrap_or(self.variant.target_households)
    }
}

/// Rosters are drawn once at construction and shared by every draw.
#[derive(Clone, Debug)]
pub struct HouseholdSimulator {
    pub cfg: HouseholdConfig,
    pub rosters: Vec<Roster>,
}

impl HouseholdSimulator {
    pub fn new(cfg: HouseholdConfig, rng: &RngStream) -> Result<Self> {
        cfg.variant.validate()?;
        cfg.study.validate()?;
        let max = cfg.variant.max_household_size();
        if cfg.rosters.size_probs.len() + 1 > max {
            return Err(Error::Config(alloc::format!(
                "rosters reach size {} but {} supports at most {max}",
                cfg.rosters.size_probs.len() + 1,
                cfg.variant.variant.name()
            )));
        }
        let rosters = cfg.rosters.generate(&mut rng.derive(0))?;
        Ok(Self { cfg, rosters })
    }

    pub fn simulate(&self, params: &HouseholdParams, scheme: Scheme, rng: &RngStream) -> Result<StudyDataset> {
        simulate_study(
            &self.rosters,
            params,
            &self.cfg.variant,
            scheme,
            &self.cfg.study,
            self.cfg.n_households(),
            rng,
        )
    }
}

pub fn scheme_condition(scheme: Scheme) -> Vec<f64> {
    let mut c = alloc::vec![0.0; 3];
    c[scheme.code() as usize] = 1.0;
    c
}

impl JointSimulator for HouseholdSimulator {
    type Obs = StudyDataset;

    fn param_names(&self) -> Vec<String> {
        super::param_names()
    }

    fn transform(&self) -> ParamTransform {
        let mut maps = alloc::vec![Bijection::Log, Bijection::Identity];
        maps.extend([Bijection::Log; 9]);
        debug_assert_eq!(maps.len(), PARAM_NAMES.len());
        ParamTransform::new(maps)
    }

    fn n_conditions(&self) -> usize {
        Scheme::ALL.len()
    }

    fn row_dim(&self) -> usize {
        PERSON_DIM
    }

    fn condition_dim(&self) -> usize {
        Scheme::ALL.len()
    }

    fn draw(&self, condition: usize, rng: &mut RngStream) -> Result<(Vec<f64>, StudyDataset)> {
        let scheme = Scheme::from_code(condition).ok_or_else(|| Error::Config(alloc::format!("no scheme {condition}")))?;
        let p = self.cfg.prior.sample(rng);
        let ds = self.simulate(&p, scheme, &rng.derive(1))?;
        Ok((p.to_vec(), ds))
    }

    fn encode(&self, obs: &StudyDataset) -> Result<EncodedSet> {
        encode_set(obs, scheme_condition(obs.scheme))
    }
}
