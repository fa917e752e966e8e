//! Per-application glue between the joint simulators and the file formats.

use std::path::Path;

use biasaware_core::household::{HouseholdSimulator, Scheme};
use biasaware_core::idm::simulator::encode_idm;
use biasaware_core::idm::IdmSimulator;
use biasaware_core::npe::{EncodedSet, NpeArch};
use biasaware_core::prevalence::pipeline::{encode_cohort, PrevalenceSimulator};
use biasaware_core::sim::JointSimulator;
use biasaware_core::RngStream;

use crate::config::{ExperimentConfig, NetworkSection, SimulatorConfig};
use crate::error::Result;
use crate::io;

pub trait App: JointSimulator + Sync
where
    Self::Obs: Send,
{
    fn condition_label(&self, c: usize) -> String;
    fn dataset_bytes(&self, obs: &Self::Obs) -> Result<Vec<u8>>;
    fn read_set(&self, path: &Path) -> Result<EncodedSet>;
    fn grouped(&self) -> bool {
        false
    }

    fn arch(&self, net: &NetworkSection) -> NpeArch {
        let mut a = NpeArch::new(self.row_dim(), self.condition_dim(), self.n_params(), net.summary_dim, net.head_width, self.grouped());
        a.enc_width = net.enc_width;
        a.n_components = net.n_components;
        a.dropout = net.dropout;
        a
    }
}

impl App for PrevalenceSimulator {
    fn condition_label(&self, c: usize) -> String {
        format!("round {}", c + 1)
    }
    fn dataset_bytes(&self, obs: &Self::Obs) -> Result<Vec<u8>> {
        io::cohort_csv(&obs.cohort)
    }
    fn read_set(&self, path: &Path) -> Result<EncodedSet> {
        Ok(encode_cohort(&io::read_cohort(path)?, &self.cfg.schema, self.n_rounds())?)
    }
}

impl App for IdmSimulator {
    fn condition_label(&self, c: usize) -> String {
        format!("epoch {}", c + 1)
    }
    fn dataset_bytes(&self, obs: &Self::Obs) -> Result<Vec<u8>> {
        io::idm_csv(obs)
    }
    fn read_set(&self, path: &Path) -> Result<EncodedSet> {
        Ok(encode_idm(&io::read_idm(path)?, self.n_epochs())?)
    }
}

impl App for HouseholdSimulator {
    fn condition_label(&self, c: usize) -> String {
        Scheme::ALL[c].name().into()
    }
    fn dataset_bytes(&self, obs: &Self::Obs) -> Result<Vec<u8>> {
        io::household_csv(obs)
    }
    fn read_set(&self, path: &Path) -> Result<EncodedSet> {
        let ds = io::read_household(path)?;
        Ok(self.encode(&ds)?)
    }
    fn grouped(&self) -> bool {
        true
    }
}

pub enum Instance {
    Prevalence(PrevalenceSimulator),
    Idm(IdmSimulator),
    Household(HouseholdSimulator),
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let rng = RngStream::new(cfg.simulator_seed, 0);
        Ok(match &cfg.simulator {
            SimulatorConfig::Prevalence(c) => Instance::Prevalence(PrevalenceSimulator::new(c.clone(), &rng)?),
            SimulatorConfig::Idm(c) => Instance::Idm(IdmSimulator::new(c.clone(), &rng)?),
            SimulatorConfig::Household(c) => Instance::Household(HouseholdSimulator::new(c.clone(), &rng)?),
        })
    }
}

/// Runs `$body` with `$a` bound to the concrete simulator.
#[macro_export]
macro_rules! with_app {
    ($inst:expr, $a:ident => $body:expr) => {
        match $inst {
            $crate::apps::Instance::Prevalence($a) => $body,
            $crate::apps::Instance::Idm($a) => $body,
            $crate::apps::Instance::Household($a) => $body,
        }
    };
}
