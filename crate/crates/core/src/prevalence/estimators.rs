//! Classical prevalence estimators.

use alloc::vec::Vec;

use super::{Cohort, TestCharacteristics, MISSING};
use crate::error::{domain, Error, Result};
use crate::randkit::RngStream;

/// `(rho_obs + Sp - 1) / (Se + Sp - 1)`, clamped to `[0, 1]`.
pub fn rogan_gladen(rho_obs: f64, test: &TestCharacteristics) -> Result<f64> {
    test.validate()?;
    let raw = (rho_obs - (1.0 - test.specificity)) / (test.sensitivity + test.specificity - 1.0);
    Ok(raw.clamp(0.0, 1.0))
}

/// Weighted complete-case mean of the apparent outcomes, corrected by
/// Rogan-Gladen.
pub fn ipw_prevalence(cohort: &Cohort, weights: &[f64], test: &TestCharacteristics) -> Result<f64> {
    if weights.len() != cohort.len() {
        return Err(domain!("{} weights for {} records", weights.len(), cohort.len()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(domain!("weights must be positive and finite"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (r, &w) in cohort.records.iter().zip(weights) {
        if r.y != MISSING {
            num += w * r.y as f64;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::Estimation("no complete cases".into()));
    }
    rogan_gladen(num / den, test)
}

/// Complete-case mean without weights, corrected by Rogan-Gladen.
pub fn unadjusted_prevalence(cohort: &Cohort, test: &TestCharacteristics) -> Result<f64> {
    ipw_prevalence(cohort, &alloc::vec![1.0; cohort.len()], test)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapResult {
    /// Estimator applied to the original data.
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: Vec<f64>,
    pub failures: usize,
    /// More than 10% of the resamples failed.
    pub unreliable: bool,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nonparametric bootstrap: `estimator` reruns the whole pipeline on each of
/// `b` resamples (with replacement) of `base`. Resample `k` uses
/// `rng.derive(k)`; the estimator receives a stream of its own.
pub fn bootstrap_estimate<T: Clone, F>(base: &[T], b: usize, rng: &RngStream, mut estimator: F) -> Result<BootstrapResult>
where
    F: FnMut(&[T], &mut RngStream) -> Result<f64>,
{
    if b < 2 {
        return Err(domain!("need at least 2 bootstrap resamples, got {b}"));
    }
    if base.is_empty() {
        return Err(Error::Precondition("empty base sample".into()));
    }
    let point = estimator(base, &mut rng.derive(u64::MAX))?;
    let mut reps = Vec::with_capacity(b);
    let mut failures = 0;
    let mut buf: Vec<T> = Vec::with_capacity(base.len());
    for k in 0..b {
        let mut r = rng.derive(k as u64);
        buf.clear();
        for _ in 0..base.len() {
            buf.push(base[r.below(base.len())].clone());
        }
        match estimator(&buf, &mut r) {
            Ok(v) if v.is_finite() => reps.push(v),
            _ => failures += 1,
        }
    }
    if reps.is_empty() {
        return Err(Error::Estimation("every bootstrap resample failed".into()));
    }
    let mut sorted = reps.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        point,
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
        replicates: reps,
        failures,
        unreliable: failures * 10 > b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prevalence::{CohortRecord, CovariateRecord};
    use alloc::vec;

    fn cohort(ys: &[i32]) -> Cohort {
        Cohort {
            records: ys
                .iter()
                .map(|&y| CohortRecord { covariates: CovariateRecord::new(0, 0, 0, 0), y })
                .collect(),
            epoch: 1,
            sampling_weights: None,
        }
    }

    #[test]
    fn rogan_gladen_examples() {
        let perfect = TestCharacteristics::perfect();
        for &r in &[0.0, 0.13, 0.5, 1.0] {
            assert_eq!(rogan_gladen(r, &perfect).unwrap(), r);
        }
        let t = TestCharacteristics::new(0.886, 0.997).unwrap();
        assert!((rogan_gladen(0.0913, &t).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rogan_gladen(0.001, &t).unwrap(), 0.0);
        let bad = TestCharacteristics { sensitivity: 0.5, specificity: 0.4 };
        assert!(matches!(rogan_gladen(0.2, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn ipw_weighted_mean() {
        // two strata of ten, prevalence 0.2 (weight 2) and 0.1 (weight 1)
        let mut ys = vec![0; 20];
        ys[0] = 1;
        ys[1] = 1;
        ys[10] = 1;
        let c = cohort(&ys);
        let w: Vec<f64> = (0..20).map(|i| if i < 10 { 2.0 } else { 1.0 }).collect();
        let est = ipw_prevalence(&c, &w, &TestCharacteristics::perfect()).unwrap();
        assert!((est - 0.5 / 3.0).abs() < 1e-15);
        assert!((est - 0.1667).abs() < 1e-4);
    }

    #[test]
    fn ipw_ignores_missing_and_fails_without_cases() {
        let c = cohort(&[1, 0, -1, 0]);
        let est = unadjusted_prevalence(&c, &TestCharacteristics::perfect()).unwrap();
        assert!((est - 1.0 / 3.0).abs() < 1e-15);
        let all_missing = cohort(&[-1, -1]);
        assert!(matches!(
            unadjusted_prevalence(&all_missing, &TestCharacteristics::perfect()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn bootstrap_degenerate_and_domain() {
        let data = vec![1u8; 50];
        let est = |d: &[u8], _: &mut RngStream| Ok(d.iter().map(|&x| x as f64).sum::<f64>() / d.len() as f64);
        let rng = RngStream::new(1, 0);
        let r = bootstrap_estimate(&data, 100, &rng, est).unwrap();
        assert_eq!(r.upper - r.lower, 0.0);
        assert_eq!(r.point, 1.0);
        assert!(bootstrap_estimate(&data, 1, &rng, est).is_err());
    }

    #[test]
    fn bootstrap_flags_failures() {
        let data: Vec<u32> = (0..30).collect();
        let rng = RngStream::new(2, 0);
        let mut calls = 0;
        let r = bootstrap_estimate(&data, 20, &rng, |d, _| {
            calls += 1;
            if calls % 4 == 0 {
                Err(Error::Estimation("x".into()))
            } else {
                Ok(d[0] as f64)
            }
        })
        .unwrap();
        assert_eq!(r.failures, 5);
        assert!(r.unreliable);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert!((quantile_sorted(&s, 0.025) - 0.1).abs() < 1e-15);
    }
}
