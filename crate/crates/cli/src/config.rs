//! Versioned TOML experiment configs. Every section is merged over the
//! application's defaults, so a config only lists what it changes.

use std::path::Path;

use biasaware_core::diagnostics::C2stConfig;
use biasaware_core::household::{HouseholdConfig, Scheme, Variant};
use biasaware_core::idm::IdmConfig;
use biasaware_core::mcmc::McmcConfig;
use biasaware_core::npe::TrainConfig;
use biasaware_core::prevalence::pipeline::PrevalenceConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Application {
    Prevalence,
    Idm,
    Household,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    pub enc_width: usize,
    pub summary_dim: usize,
    pub head_width: usize,
    pub n_components: usize,
    pub dropout: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SbcMethod {
    Npe,
    Mcmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Embedding {
    /// Posterior mean of the evaluated model, standardised unconstrained scale.
    PosteriorMean,
    /// The evaluated model's summary vector.
    Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub train_pairs: usize,
    pub posterior_samples: usize,
    pub sbc_simulations: usize,
    pub sbc_draws: usize,
    pub sbc_level: f64,
    pub sbc_method: SbcMethod,
    pub c2st_pairs: usize,
    pub c2st_embedding: Embedding,
    /// Evaluate the C2ST on data simulated with visit censoring switched
    /// on or off (illness-death only); `None` keeps the simulator setting.
    pub c2st_visit_censoring: Option<bool>,
    pub mcmc_chains: usize,
    pub gradcheck_pairs: usize,
    pub gradcheck_probes: usize,
    pub gradcheck_eps: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            train_pairs: 2000,
            posterior_samples: 1000,
            sbc_simulations: 200,
            sbc_draws: 100,
            sbc_level: 0.95,
            sbc_method: SbcMethod::Npe,
            c2st_pairs: 500,
            c2st_embedding: Embedding::PosteriorMean,
            c2st_visit_censoring: None,
            mcmc_chains: 4,
            gradcheck_pairs: 8,
            gradcheck_probes: 200,
            gradcheck_eps: 1e-6,
            gradcheck_tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSection {
    pub variant: Variant,
    /// Fixed inclusion scheme for `simulate` and `mcmc`; `None` cycles
    /// through all schemes.
    pub scheme: Option<Scheme>,
}

impl Default for HouseholdSection {
    fn default() -> Self {
        Self {
            variant: Variant::Omicron,
            scheme: None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum SimulatorConfig {
    Prevalence(PrevalenceConfig),
    Idm(IdmConfig),
    Household(HouseholdConfig),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub application: Application,
    pub seed: u64,
    /// Seed for the fixed simulator context (synthetic population, cohort
    /// covariates, rosters); independent of `seed` so training and
    /// evaluation share it.
    pub simulator_seed: u64,
    pub simulator: SimulatorConfig,
    pub household: HouseholdSection,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub run: RunSection,
    pub c2st: C2stConfig,
    pub mcmc: McmcConfig,
}

#[derive(Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub scheme: Option<Scheme>,
}

const TOP_LEVEL: [&str; 11] = [
    "schema_version",
    "application",
    "seed",
    "simulator_seed",
    "simulator",
    "household",
    "network",
    "train",
    "run",
    "c2st",
    "mcmc",
];

fn default_network(app: Application) -> NetworkSection {
    let (summary_dim, head_width) = match app {
        Application::Prevalence => (8, 64),
        Application::Idm => (24, 128),
        Application::Household => (32, 128),
    };
    NetworkSection {
        enc_width: 64,
        summary_dim,
        head_width,
        n_components: 10,
        dropout: 0.1,
    }
}

fn to_table<T: Serialize>(v: &T) -> Table {
    match Value::try_from(v).expect("defaults serialise to TOML") {
        Value::Table(t) => t,
        _ => unreachable!("sections are structs"),
    }
}

fn merge(base: &mut Table, user: &Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Keys the user wrote that the parsed value does not carry.
fn unknown_keys(user: &Table, parsed: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = format!("{prefix}.{k}");
        match (parsed.get(k), v) {
            (None, _) => out.push(path),
            (Some(Value::Table(p)), Value::Table(u)) => unknown_keys(u, p, &path, out),
            _ => {}
        }
    }
}

fn section<T: Serialize + DeserializeOwned + Clone>(default: &T, user: Option<&Value>, name: &str) -> Result<T> {
    let Some(user) = user else {
        return Ok(default.clone());
    };
    let user = user
        .as_table()
        .ok_or_else(|| CliError::Config(format!("{name}: expected a table")))?;
    let mut merged = to_table(default);
    merge(&mut merged, user);
    let value: T = serde_path_to_error::deserialize(Value::Table(merged)).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{name}.{path}: {}", e.inner()))
    })?;
    let mut unknown = Vec::new();
    unknown_keys(user, &to_table(&value), name, &mut unknown);
    if let Some(k) = unknown.first() {
        return Err(CliError::Config(format!("{k}: unknown field")));
    }
    Ok(value)
}

impl ExperimentConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, ov)
    }

    pub fn parse(text: &str, ov: &Overrides) -> Result<Self> {
        let doc: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for k in doc.keys() {
            if !TOP_LEVEL.contains(&k.as_str()) {
                return Err(CliError::Config(format!("{k}: unknown field")));
            }
        }
        let version = doc
            .get("schema_version")
            .and_then(Value::as_integer)
            .ok_or_else(|| CliError::Config("schema_version: missing or not an integer".into()))?;
        if version != SCHEMA_VERSION as i64 {
            return Err(CliError::Config(format!(
                "schema_version: config declares version {version}, this build reads version {SCHEMA_VERSION}"
            )));
        }
        let application: Application = doc
            .get("application")
            .cloned()
            .ok_or_else(|| CliError::Config("application: missing".into()))
            .and_then(|v| v.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("application: {}", e.message()))))?;
        let int = |k: &str| -> Result<Option<u64>> {
            match doc.get(k) {
                None => Ok(None),
                Some(v) => v
                    .as_integer()
                    .filter(|&i| i >= 0)
                    .map(|i| Some(i as u64))
                    .ok_or_else(|| CliError::Config(format!("{k}: expected a nonnegative integer"))),
            }
        };
        let seed = ov.seed.or(int("seed")?).unwrap_or(0);
        let simulator_seed = int("simulator_seed")?.unwrap_or(1);
        let mut household = section(&HouseholdSection::default(), doc.get("household"), "household")?;
        if let Some(v) = ov.variant {
            household.variant = v;
        }
        if let Some(s) = ov.scheme {
            household.scheme = Some(s);
        }
        let user_sim = doc.get("simulator");
        let simulator = match application {
            Application::Prevalence => SimulatorConfig::Prevalence(section(&PrevalenceConfig::default(), user_sim, "simulator")?),
            Application::Idm => SimulatorConfig::Idm(section(&IdmConfig::default(), user_sim, "simulator")?),
            Application::Household => {
                let c: HouseholdConfig = section(&HouseholdConfig::for_variant(household.variant), user_sim, "simulator")?;
                if c.variant.variant != household.variant {
                    return Err(CliError::Config(format!(
                        "simulator.variant.variant: {} conflicts with household.variant {}",
                        c.variant.variant.name(),
                        household.variant.name()
                    )));
                }
                SimulatorConfig::Household(c)
            }
        };
        let cfg = Self {
            application,
            seed,
            simulator_seed,
            simulator,
            household,
            network: section(&default_network(application), doc.get("network"), "network")?,
            train: section(&TrainConfig::default(), doc.get("train"), "train")?,
            run: section(&RunSection::default(), doc.get("run"), "run")?,
            c2st: section(&C2stConfig::default(), doc.get("c2st"), "c2st")?,
            mcmc: section(&McmcConfig::default(), doc.get("mcmc"), "mcmc")?,
        };
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Fully expanded config as TOML, for provenance next to outputs.
    pub fn resolved_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("schema_version".into(), Value::Integer(SCHEMA_VERSION as i64));
        t.insert("application".into(), Value::try_from(self.application).expect("enum"));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("simulator_seed".into(), Value::Integer(self.simulator_seed as i64));
        let sim = match &self.simulator {
            SimulatorConfig::Prevalence(c) => to_table(c),
            SimulatorConfig::Idm(c) => to_table(c),
            SimulatorConfig::Household(c) => to_table(c),
        };
        t.insert("household".into(), Value::Table(to_table(&self.household)));
        t.insert("network".into(), Value::Table(to_table(&self.network)));
        t.insert("train".into(), Value::Table(to_table(&self.train)));
        t.insert("run".into(), Value::Table(to_table(&self.run)));
        t.insert("c2st".into(), Value::Table(to_table(&self.c2st)));
        t.insert("mcmc".into(), Value::Table(to_table(&self.mcmc)));
        t.insert("simulator".into(), Value::Table(sim));
        toml::to_string(&t).expect("serialisable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::parse("schema_version = 1\napplication = \"prevalence\"\n", &Overrides::default()).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert!(matches!(c.simulator, SimulatorConfig::Prevalence(ref p) if *p == PrevalenceConfig::default()));
    }

    #[test]
    fn partial_sections_merge() {
        let text = "schema_version = 1\napplication = \"idm\"\n[simulator]\ncohort_size = 300\n[train]\nepochs = 3\n";
        let c = ExperimentConfig::parse(text, &Overrides::default()).unwrap();
        let SimulatorConfig::Idm(idm) = c.simulator else { panic!() };
        assert_eq!(idm.cohort_size, 300);
        assert_eq!(idm.visits, IdmConfig::default().visits);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn errors_name_the_field_path() {
        let bad = "schema_version = 1\napplication = \"household\"\n[simulator.study]\nhorizon = \"long\"\n";
        let e = ExperimentConfig::parse(bad, &Overrides::default()).unwrap_err().to_string();
        assert!(e.contains("simulator.study.horizon"), "{e}");
        let typo = "schema_version = 1\napplication = \"household\"\n[train]\nepoch = 3\n";
        let e = ExperimentConfig::parse(typo, &Overrides::default()).unwrap_err().to_string();
        assert!(e.contains("train.epoch"), "{e}");
        let v = "schema_version = 2\napplication = \"idm\"\n";
        assert!(ExperimentConfig::parse(v, &Overrides::default()).unwrap_err().to_string().contains("version 2"));
    }

    #[test]
    fn resolved_config_parses_back() {
        let ov = Overrides {
            variant: Some(Variant::Alpha),
            ..Default::default()
        };
        let c = ExperimentConfig::parse("schema_version = 1\napplication = \"household\"\n", &ov).unwrap();
        let again = ExperimentConfig::parse(&c.resolved_toml(), &Overrides::default()).unwrap();
        assert_eq!(again.resolved_toml(), c.resolved_toml());
        assert_eq!(again.household.variant, Variant::Alpha);
    }
}
