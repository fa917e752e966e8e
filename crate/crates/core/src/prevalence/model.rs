//! Logistic infection model and test misclassification.

use alloc::vec::Vec;

use super::{CovariateRecord, CovariateSchema, PrevalenceParams, TestCharacteristics, N_DIMS};
use crate::error::{domain, Error, Result};
use crate::randkit::{logistic, RngStream};

/// `beta0 + beta' dummy(c)`; reference categories contribute nothing.
pub fn linear_predictor(params: &PrevalenceParams, schema: &CovariateSchema, rec: &CovariateRecord) -> Result<f64> {
    if params.beta.len() != schema.n_effects() {
        return Err(domain!("expected {} log-odds ratios, got {}", schema.n_effects(), params.beta.len()));
    }
    let mut eta = params.beta0;
    for d in 0..N_DIMS {
        let c = rec.codes[d];
        if c < 0 {
            return Err(Error::Precondition(alloc::format!(
                "covariate '{}' is missing; impute before simulating infections",
                schema.dims[d].name
            )));
        }
        if let Some(k) = schema.effect_index(d, c as usize) {
            eta += params.beta[k];
        }
    }
    Ok(eta)
}

pub fn infection_probability(params: &PrevalenceParams, schema: &CovariateSchema, rec: &CovariateRecord) -> Result<f64> {
    Ok(logistic(linear_predictor(params, schema, rec)?))
}

/// Infection probability for every complete stratum, indexed by
/// [`CovariateSchema::stratum`].
pub fn stratum_probabilities(params: &PrevalenceParams, schema: &CovariateSchema) -> Result<Vec<f64>> {
    let card = schema.cardinalities();
    let mut out = Vec::with_capacity(schema.n_strata());
    for s in 0..schema.n_strata() {
        let mut rem = s;
        let mut codes = [0i32; N_DIMS];
        for d in (0..N_DIMS).rev() {
            codes[d] = (rem % card[d]) as i32;
            rem /= card[d];
        }
        out.push(infection_probability(params, schema, &CovariateRecord { codes })?);
    }
    Ok(out)
}

/// Latent infection status `y~_i ~ Bernoulli(logistic(eta_i))`.
pub fn simulate_infections(
    params: &PrevalenceParams,
    schema: &CovariateSchema,
    covariates: &[CovariateRecord],
    rng: &mut RngStream,
) -> Result<Vec<u8>> {
    let probs = stratum_probabilities(params, schema)?;
    covariates
        .iter()
        .map(|c| {
            if !c.is_complete() {
                return Err(Error::Precondition("covariates must be complete".into()));
            }
            schema.validate(c)?;
            Ok(rng.bernoulli(probs[schema.stratum(c)]) as u8)
        })
        .collect()
}

/// Apparent status: `P(y=1 | y~=1) = Se`, `P(y=1 | y~=0) = 1 - Sp`.
pub fn apply_misclassification(latent: &[u8], test: &TestCharacteristics, rng: &mut RngStream) -> Vec<u8> {
    latent
        .iter()
        .map(|&t| {
            let p = if t == 1 { test.sensitivity } else { 1.0 - test.specificity };
            rng.bernoulli(p) as u8
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn zero_params(schema: &CovariateSchema, beta0: f64) -> PrevalenceParams {
        PrevalenceParams {
            beta0,
            beta: vec![0.0; schema.n_effects()],
        }
    }

    #[test]
    fn zero_log_odds_give_one_half() {
        let schema = CovariateSchema::default_schema();
        let p = zero_params(&schema, 0.0);
        for s in stratum_probabilities(&p, &schema).unwrap() {
            assert_eq!(s, 0.5);
        }
    }

    #[test]
    fn reference_individual_depends_only_on_intercept() {
        let schema = CovariateSchema::default_schema();
        let mut p = zero_params(&schema, -2.0);
        for (i, b) in p.beta.iter_mut().enumerate() {
            *b = 0.3 * (i as f64 + 1.0);
        }
        let reference = CovariateRecord::new(0, 1, 0, 0);
        assert_eq!(linear_predictor(&p, &schema, &reference).unwrap(), -2.0);
        let other = CovariateRecord::new(1, 1, 0, 0);
        assert!((linear_predictor(&p, &schema, &other).unwrap() + 1.7).abs() < 1e-12);
    }

    #[test]
    fn population_prevalence_matches_logistic_intercept() {
        let schema = CovariateSchema::default_schema();
        let p = zero_params(&schema, -3.0);
        let covs = vec![CovariateRecord::new(1, 3, 1, 2); 100_000];
        let mut rng = RngStream::new(11, 0);
        let y = simulate_infections(&p, &schema, &covs, &mut rng).unwrap();
        let mean = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
        let expect = logistic(-3.0);
        assert!((expect - 0.0474).abs() < 1e-4);
        let se = (expect * (1.0 - expect) / 1e5f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
    }

    #[test]
    fn missing_covariate_is_precondition_error() {
        let schema = CovariateSchema::default_schema();
        let p = zero_params(&schema, -3.0);
        let covs = vec![CovariateRecord::new(1, -1, 1, 2)];
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            simulate_infections(&p, &schema, &covs, &mut rng),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn misclassification_edges() {
        let mut rng = RngStream::new(5, 0);
        let latent: Vec<u8> = (0..1000).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(apply_misclassification(&latent, &TestCharacteristics::perfect(), &mut rng), latent);

        let zeros = vec![0u8; 200_000];
        let t = TestCharacteristics::new(0.886, 0.997).unwrap();
        let y = apply_misclassification(&zeros, &t, &mut rng);
        let m = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
        let se = (0.003f64 * 0.997 / 2e5).sqrt();
        assert!((m - 0.003).abs() < 3.0 * se);
    }

    #[test]
    fn apparent_prevalence_by_total_probability() {
        let t = TestCharacteristics::new(0.886, 0.997).unwrap();
        assert!((t.apparent(0.10) - 0.0913).abs() < 1e-12);
        let latent: Vec<u8> = (0..200_000).map(|i| (i % 10 == 0) as u8).collect();
        let mut rng = RngStream::new(9, 0);
        let y = apply_misclassification(&latent, &t, &mut rng);
        let m = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
        assert!((m - 0.0913).abs() < 3.0 * (0.0913f64 * 0.9087 / 2e5).sqrt());
    }
}
