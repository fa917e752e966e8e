//! Simulation-based calibration, classifier two-sample tests and posterior
//! contraction.

pub mod c2st;
pub mod ecdf;
pub mod sbc;

use alloc::vec::Vec;

use crate::error::{domain, Result};

pub use c2st::{c2st, c2st_statistic, permutation_pvalue, C2stConfig, C2stResult, C2stUnit};
pub use ecdf::{ecdf_uniformity, EcdfBand, EcdfVerdict};
pub use sbc::{rank_of, sbc_ranks, RankMatrix, SbcRun};

pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// `1 - var(posterior) / var(prior)` per column, clamped at 0. Samples are
/// rows; pass them in the space the comparison should be made in.
pub fn posterior_contraction(prior: &[Vec<f64>], posterior: &[Vec<f64>]) -> Result<Vec<f64>> {
    if prior.len() < 2 || posterior.len() < 2 {
        return Err(domain!("contraction needs at least two prior and two posterior samples"));
    }
    let d = prior[0].len();
    (0..d)
        .map(|j| {
            let a: Vec<f64> = prior.iter().map(|x| x[j]).collect();
            let b: Vec<f64> = posterior.iter().map(|x| x[j]).collect();
            let (_, vp) = mean_var(&a);
            let (_, vq) = mean_var(&b);
            if !(vp > 0.0) {
                return Err(domain!("prior variance of column {j} is zero"));
            }
            Ok((1.0 - vq / vp).max(0.0))
        })
        .collect()
}
