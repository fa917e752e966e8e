//! Hazard recovery error against ground truth.

use alloc::vec::Vec;

use super::{IdmParams, MeanCovariates, Transition};
use crate::error::{domain, Result};
use crate::prevalence::estimators::quantile_sorted;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Root mean square over posterior samples.
    Rmse,
    /// Absolute error of the posterior median.
    Median,
}

/// Time-mean of the covariate-adjusted hazard over `[grid[0], grid[last]]`,
/// i.e. the cumulative hazard increment divided by the window length.
pub fn mean_hazard(params: &IdmParams, kl: Transition, cov: MeanCovariates, grid: &[f64]) -> Result<f64> {
    let (Some(&t0), Some(&t1)) = (grid.first(), grid.last()) else {
        return Err(domain!("empty time grid"));
    };
    if !(t1 > t0) || t0 < 0.0 {
        return Err(domain!("time grid must span a positive window starting at t >= 0"));
    }
    Ok((params.adjusted_cumulative_hazard(kl, cov, t1) - params.adjusted_cumulative_hazard(kl, cov, t0)) / (t1 - t0))
}

/// Per-transition error of the time-mean hazard, normalized by the truth's
/// time-mean hazard.
pub fn nrmse_hazard(
    samples: &[IdmParams],
    truth: &IdmParams,
    cov: MeanCovariates,
    grid: &[f64],
    aggregation: Aggregation,
) -> Result<[f64; 3]> {
    if samples.is_empty() {
        return Err(domain!("need at least one posterior sample"));
    }
    let mut out = [0.0; 3];
    for kl in Transition::ALL {
        let h_true = mean_hazard(truth, kl, cov, grid)?;
        if !(h_true > 0.0) {
            return Err(domain!("ground-truth mean hazard is zero for transition {}", kl.label()));
        }
        let hs: Vec<f64> = samples.iter().map(|s| mean_hazard(s, kl, cov, grid)).collect::<Result<_>>()?;
        out[kl.index()] = match aggregation {
            Aggregation::Rmse => {
                let mse = hs.iter().map(|h| (h - h_true) * (h - h_true)).sum::<f64>() / hs.len() as f64;
                mse.sqrt() / h_true
            }
            Aggregation::Median => {
                let mut sorted = hs.clone();
                sorted.sort_by(f64::total_cmp);
                (quantile_sorted(&sorted, 0.5) - h_true).abs() / h_true
            }
        };
    }
    Ok(out)
}
