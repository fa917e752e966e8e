//! Synthetic population by IPF oversampling, and inverse-probability
//! subsampling back to study size.

use alloc::vec;
use alloc::vec::Vec;

use super::ipf::{ipf_weights, IpfOptions};
use super::{Cohort, CohortRecord, CovariateRecord, MarginTable, MISSING, N_DIMS};
use crate::error::{domain, Result};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

/// Oversampled population. Member `i` is a copy of source record
/// `source[i]` with missing covariates imputed from the margins.
#[derive(Clone, Debug)]
pub struct SyntheticPopulation {
    pub members: Vec<CovariateRecord>,
    pub source: Vec<usize>,
    /// The study sample the population was built from, missing codes intact.
    pub source_records: Vec<CohortRecord>,
    /// IPF weight of each source record (mean 1).
    pub source_weights: Vec<f64>,
    pub epoch: u32,
}

impl SyntheticPopulation {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Oversampling weight carried by member `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.source_weights[self.source[i]]
    }
}

/// Resample `pop_size` members proportional to IPF weight and impute missing
/// covariates independently per copy.
pub fn build_synthetic_population(
    sample: &Cohort,
    margins: &MarginTable,
    pop_size: usize,
    opts: IpfOptions,
    rng: &mut RngStream,
) -> Result<SyntheticPopulation> {
    if pop_size == 0 {
        return Err(domain!("population size must be positive"));
    }
    let covs = sample.covariates();
    let weights = ipf_weights(&covs, margins, opts)?;
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in &weights {
        acc += w;
        cum.push(acc);
    }
    let mut members = Vec::with_capacity(pop_size);
    let mut source = Vec::with_capacity(pop_size);
    for _ in 0..pop_size {
        let u = rng.uniform() * acc;
        let j = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let mut rec = covs[j];
        for d in 0..N_DIMS {
            if rec.codes[d] == MISSING {
                rec.codes[d] = rng.categorical(&margins.margins[d]) as i32;
            }
        }
        members.push(rec);
        source.push(j);
    }
    Ok(SyntheticPopulation {
        members,
        source,
        source_records: sample.records.clone(),
        source_weights: weights,
        epoch: sample.epoch,
    })
}

/// Weighted sampling without replacement with inclusion proportional to
/// `1 / weight` (Efraimidis-Spirakis keys `u^(1/w_i)`; the `k` largest win).
/// Returned indices are sorted.
pub fn subsample_indices(population: &SyntheticPopulation, cohort_size: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    let n = population.len();
    if cohort_size > n {
        return Err(domain!("cohort size {cohort_size} exceeds population size {n}"));
    }
    // log key = ln(u) / (1 / w) = w ln(u)
    let mut keys: Vec<(f64, usize)> = (0..n).map(|i| (population.weight(i) * rng.uniform_open().ln(), i)).collect();
    if cohort_size < n && cohort_size > 0 {
        keys.select_nth_unstable_by(cohort_size - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    }
    let mut idx: Vec<usize> = keys[..cohort_size].iter().map(|k| k.1).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Cohort from selected members. `outcomes[k]` is the apparent outcome of
/// `selected[k]`. The source record's missing outcome and missing covariate
/// codes are reimposed; `reimpose_outcome_missingness = false` keeps every
/// outcome observed.
pub fn assemble_cohort(
    population: &SyntheticPopulation,
    selected: &[usize],
    outcomes: &[u8],
    reimpose_outcome_missingness: bool,
) -> Cohort {
    let mut records = Vec::with_capacity(selected.len());
    let mut weights = Vec::with_capacity(selected.len());
    for (&i, &y) in selected.iter().zip(outcomes) {
        let src = &population.source_records[population.source[i]];
        let mut cov = population.members[i];
        for d in 0..N_DIMS {
            if src.covariates.codes[d] == MISSING {
                cov.codes[d] = MISSING;
            }
        }
        let y = if reimpose_outcome_missingness && src.y == MISSING { MISSING } else { y as i32 };
        records.push(CohortRecord { covariates: cov, y });
        weights.push(population.weight(i));
    }
    Cohort {
        records,
        epoch: population.epoch,
        sampling_weights: Some(weights),
    }
}

/// Inverse-probability subsample of a population with per-member apparent
/// outcomes `outcomes` (indexed like `population.members`).
pub fn subsample_biased(
    population: &SyntheticPopulation,
    outcomes: &[u8],
    cohort_size: usize,
    rng: &mut RngStream,
) -> Result<Cohort> {
    if outcomes.len() != population.len() {
        return Err(domain!("need one outcome per population member"));
    }
    let idx = subsample_indices(population, cohort_size, rng)?;
    let ys: Vec<u8> = idx.iter().map(|&i| outcomes[i]).collect();
    Ok(assemble_cohort(population, &idx, &ys, true))
}

/// Member counts per complete stratum.
pub fn stratum_counts(population: &SyntheticPopulation, schema: &super::CovariateSchema) -> Vec<u64> {
    let mut c = vec![0u64; schema.n_strata()];
    for m in &population.members {
        c[schema.stratum(m)] += 1;
    }
    c
}
