//! The prevalence joint simulator: prior draw, latent infections on a fixed
//! synthetic population, biased subsample, misclassified outcomes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::generator::{generate_base_rounds, BaseSampleConfig};
use super::ipf::IpfOptions;
use super::model::stratum_probabilities;
use super::population::{assemble_cohort, build_synthetic_population, subsample_indices, SyntheticPopulation};
use super::{Cohort, CovariateSchema, MarginTable, PrevalenceParams, TestCharacteristics, MISSING, N_DIMS};
use crate::error::{Error, Result};
use crate::npe::set::EncodedSet;
use crate::randkit::RngStream;
use crate::sim::JointSimulator;
use crate::transform::{Bijection, ParamTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalencePrior {
    pub intercept_mean: f64,
    pub intercept_sd: f64,
    pub effect_sd: f64,
}

impl Default for PrevalencePrior {
    fn default() -> Self {
        Self {
            intercept_mean: -3.0,
            intercept_sd: 1.0,
            effect_sd: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceConfig {
    pub schema: CovariateSchema,
    pub margins: MarginTable,
    pub test: TestCharacteristics,
    pub base: BaseSampleConfig,
    pub prior: PrevalencePrior,
    pub pop_size: usize,
    /// Study size after subsampling; defaults to the base sample size.
    pub cohort_size: Option<usize>,
    pub outcome_missingness: bool,
    pub ipf_tol: f64,
    pub ipf_max_iter: usize,
}

impl Default for PrevalenceConfig {
    fn default() -> Self {
        Self {
            schema: CovariateSchema::default_schema(),
            margins: MarginTable::default_synthetic(),
            test: TestCharacteristics::default_serology(),
            base: BaseSampleConfig::default(),
            prior: PrevalencePrior::default(),
            pop_size: 40_000,
            cohort_size: None,
            outcome_missingness: true,
            ipf_tol: 1e-8,
            ipf_max_iter: 1000,
        }
    }
}

/// Latent prevalence and the selected study cohort.
#[derive(Clone, Debug)]
pub struct PrevalenceDraw {
    pub params: PrevalenceParams,
    pub rho: f64,
    pub cohort: Cohort,
}

/// Joint simulator over study rounds. Base sample and synthetic populations
/// are built once at construction; every draw reuses them.
#[derive(Clone, Debug)]
pub struct PrevalenceSimulator {
    pub cfg: PrevalenceConfig,
    pub rounds: Vec<Cohort>,
    pub populations: Vec<SyntheticPopulation>,
    stratum_of: Vec<Vec<usize>>,
    stratum_counts: Vec<Vec<u64>>,
}

impl PrevalenceSimulator {
    pub fn new(cfg: PrevalenceConfig, rng: &RngStream) -> Result<Self> {
        cfg.margins.check_schema(&cfg.schema)?;
        cfg.test.validate()?;
        let cohort_size = cfg.cohort_size.unwrap_or(cfg.base.size);
        if cohort_size > cfg.pop_size {
            return Err(Error::Config(alloc::format!(
                "cohort_size {cohort_size} exceeds pop_size {}",
                cfg.pop_size
            )));
        }
        let rounds = generate_base_rounds(&cfg.base, &cfg.margins, &mut rng.derive(0))?;
        let opts = IpfOptions {
            tol: cfg.ipf_tol,
            max_iter: cfg.ipf_max_iter,
        };
        let mut populations = Vec::with_capacity(rounds.len());
        let mut stratum_of = Vec::with_capacity(rounds.len());
        let mut stratum_counts = Vec::with_capacity(rounds.len());
        for (r, c) in rounds.iter().enumerate() {
            let pop = build_synthetic_population(c, &cfg.margins, cfg.pop_size, opts, &mut rng.derive(1 + r as u64))?;
            let of: Vec<usize> = pop.members.iter().map(|m| cfg.schema.stratum(m)).collect();
            let mut counts = vec![0u64; cfg.schema.n_strata()];
            for &s in &of {
                counts[s] += 1;
            }
            populations.push(pop);
            stratum_of.push(of);
            stratum_counts.push(counts);
        }
        Ok(Self {
            cfg,
            rounds,
            populations,
            stratum_of,
            stratum_counts,
        })
    }

    pub fn cohort_size(&self) -> usize {
        self.cfg.cohort_size.unwrap_or(self.cfg.base.size)
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn sample_prior(&self, rng: &mut RngStream) -> PrevalenceParams {
        let p = &self.cfg.prior;
        PrevalenceParams {
            beta0: p.intercept_mean + p.intercept_sd * rng.std_normal(),
            beta: (0..self.cfg.schema.n_effects()).map(|_| p.effect_sd * rng.std_normal()).collect(),
        }
    }

    /// Forward model for fixed parameters in round `round` (0-based).
    ///
    /// Latent status is drawn per selected member; the remaining population
    /// members of each stratum only enter through their binomial count.
    pub fn simulate(&self, params: &PrevalenceParams, round: usize, rng: &mut RngStream) -> Result<PrevalenceDraw> {
        let pop = self
            .populations
            .get(round)
            .ok_or_else(|| Error::Precondition(alloc::format!("round {round} out of range")))?;
        let probs = stratum_probabilities(params, &self.cfg.schema)?;
        let selected = subsample_indices(pop, self.cohort_size(), rng)?;
        let mut selected_per_stratum = vec![0u64; probs.len()];
        let mut infected = 0u64;
        let mut latent = Vec::with_capacity(selected.len());
        for &i in &selected {
            let s = self.stratum_of[round][i];
            selected_per_stratum[s] += 1;
            let t = rng.bernoulli(probs[s]) as u8;
            infected += t as u64;
            latent.push(t);
        }
        for (s, (&total, &taken)) in self.stratum_counts[round].iter().zip(&selected_per_stratum).enumerate() {
            infected += rng.binomial(total - taken, probs[s]);
        }
        let n = pop.len() as f64;
        let rho = (infected as f64 / n).clamp(0.5 / n, 1.0 - 0.5 / n);
        let apparent = super::model::apply_misclassification(&latent, &self.cfg.test, rng);
        let cohort = assemble_cohort(pop, &selected, &apparent, self.cfg.outcome_missingness);
        Ok(PrevalenceDraw {
            params: params.clone(),
            rho,
            cohort,
        })
    }

    /// Complete-case IPW estimate with the source oversampling weights.
    pub fn ipw_estimate(&self, cohort: &Cohort) -> Result<f64> {
        let w = cohort
            .sampling_weights
            .as_ref()
            .ok_or_else(|| Error::Precondition("cohort carries no sampling weights".into()))?;
        super::estimators::ipw_prevalence(cohort, w, &self.cfg.test)
    }
}

/// Row layout: one-hot per covariate (missing = all zeros), one-hot outcome
/// (missing = zeros), one-hot round.
pub fn encode_cohort(cohort: &Cohort, schema: &CovariateSchema, n_rounds: usize) -> Result<EncodedSet> {
    let cards = schema.cardinalities();
    let cov_dim: usize = cards.iter().sum();
    let row_dim = cov_dim + 2 + n_rounds;
    let r = cohort.epoch as usize;
    if r == 0 || r > n_rounds {
        return Err(Error::Encoding(alloc::format!("round {} outside 1..={n_rounds}", cohort.epoch)));
    }
    let mut rows = vec![0.0; cohort.len() * row_dim];
    for (k, rec) in cohort.records.iter().enumerate() {
        schema.validate(&rec.covariates)?;
        let row = &mut rows[k * row_dim..(k + 1) * row_dim];
        let mut off = 0;
        for d in 0..N_DIMS {
            let c = rec.covariates.codes[d];
            if c != MISSING {
                row[off + c as usize] = 1.0;
            }
            off += cards[d];
        }
        match rec.y {
            0 => row[off] = 1.0,
            1 => row[off + 1] = 1.0,
            MISSING => {}
            y => return Err(Error::Encoding(alloc::format!("outcome code {y}"))),
        }
        row[off + 2 + r - 1] = 1.0;
    }
    let mut condition = vec![0.0; n_rounds];
    condition[r - 1] = 1.0;
    Ok(EncodedSet::flat(row_dim, rows, condition)?.canonical())
}

impl JointSimulator for PrevalenceSimulator {
    type Obs = PrevalenceDraw;

    fn param_names(&self) -> Vec<String> {
        vec!["rho".into()]
    }

    fn transform(&self) -> ParamTransform {
        ParamTransform::new(vec![Bijection::Logit])
    }

    fn n_conditions(&self) -> usize {
        self.n_rounds()
    }

    fn row_dim(&self) -> usize {
        self.cfg.schema.cardinalities().iter().sum::<usize>() + 2 + self.n_rounds()
    }

    fn condition_dim(&self) -> usize {
        self.n_rounds()
    }

    fn draw(&self, condition: usize, rng: &mut RngStream) -> Result<(Vec<f64>, PrevalenceDraw)> {
        let params = self.sample_prior(rng);
        let d = self.simulate(&params, condition, rng)?;
        Ok((vec![d.rho], d))
    }

    fn encode(&self, obs: &PrevalenceDraw) -> Result<EncodedSet> {
        encode_cohort(&obs.cohort, &self.cfg.schema, self.n_rounds())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prevalence::model::infection_probability;

    fn small() -> PrevalenceConfig {
        PrevalenceConfig {
            base: BaseSampleConfig { size: 400, ..Default::default() },
            pop_size: 4000,
            ..Default::default()
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let sim = PrevalenceSimulator::new(small(), &RngStream::new(1, 0)).unwrap();
        let a = sim.draw(2, &mut RngStream::new(9, 4)).unwrap();
        let b = sim.draw(2, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.cohort, b.1.cohort);
        assert_eq!(sim.encode(&a.1).unwrap(), sim.encode(&b.1).unwrap());
    }

    #[test]
    fn rho_tracks_expected_population_prevalence() {
        let sim = PrevalenceSimulator::new(small(), &RngStream::new(2, 0)).unwrap();
        let mut rng = RngStream::new(3, 0);
        let params = sim.sample_prior(&mut rng);
        let pop = &sim.populations[0];
        let expect: f64 = pop
            .members
            .iter()
            .map(|m| infection_probability(&params, &sim.cfg.schema, m).unwrap())
            .sum::<f64>()
            / pop.len() as f64;
        let reps = 200;
        let mean: f64 = (0..reps).map(|r| sim.simulate(&params, 0, &mut rng.derive(r)).unwrap().rho).sum::<f64>() / reps as f64;
        let se = (expect * (1.0 - expect) / pop.len() as f64 / reps as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * se + 1e-4, "{mean} vs {expect}");
    }

    #[test]
    fn missingness_switch() {
        let mut cfg = small();
        let sim = PrevalenceSimulator::new(cfg.clone(), &RngStream::new(4, 0)).unwrap();
        let d = sim.draw(4, &mut RngStream::new(1, 1)).unwrap().1;
        assert!(d.cohort.missing_fraction() > 0.2);
        cfg.outcome_missingness = false;
        let sim = PrevalenceSimulator::new(cfg, &RngStream::new(4, 0)).unwrap();
        let d = sim.draw(4, &mut RngStream::new(1, 1)).unwrap().1;
        assert_eq!(d.cohort.missing_fraction(), 0.0);
    }

    #[test]
    fn encoding_layout() {
        let sim = PrevalenceSimulator::new(small(), &RngStream::new(5, 0)).unwrap();
        let d = sim.draw(1, &mut RngStream::new(2, 0)).unwrap().1;
        let e = sim.encode(&d).unwrap();
        assert_eq!(e.row_dim, sim.row_dim());
        assert_eq!(e.row_dim, 14 + 2 + 5);
        assert_eq!(e.condition, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.weights.iter().sum::<f64>(), d.cohort.len() as f64);
        assert!(e.n_rows() < d.cohort.len());
        for i in 0..e.n_rows() {
            let row = e.row(i);
            assert_eq!(row[16 + 1], 1.0);
            assert!(row[14] + row[15] <= 1.0);
        }
    }

    #[test]
    fn ipw_unbiased_without_outcome_missingness() {
        let mut cfg = small();
        cfg.pop_size = 20_000;
        cfg.outcome_missingness = false;
        cfg.test = TestCharacteristics::perfect();
        let sim = PrevalenceSimulator::new(cfg, &RngStream::new(6, 0)).unwrap();
        let params = PrevalenceParams {
            beta0: -1.5,
            beta: vec![0.4, -0.3, 0.0, 0.5, 0.7, 1.0, 0.6, -0.5, 0.3, 0.8],
        };
        let n = 300;
        let errs: Vec<f64> = (0..n)
            .map(|k| {
                let d = sim.simulate(&params, 0, &mut RngStream::new(7, k)).unwrap();
                sim.ipw_estimate(&d.cohort).unwrap() - d.rho
            })
            .collect();
        let m = errs.iter().sum::<f64>() / n as f64;
        let sd = (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(m.abs() < 2.5 * sd / (n as f64).sqrt(), "mean error {m}, sd {sd}");
    }
}
