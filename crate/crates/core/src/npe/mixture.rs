//! Diagonal Gaussian mixtures as conditional densities.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::randkit::special::{log_sum_exp, LN_SQRT_2PI};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

pub const LOG_SD_MIN: f64 = -10.0;
pub const LOG_SD_MAX: f64 = 6.0;

/// Raw head output size for `m` components in dimension `d`: logits, then
/// means, then log standard deviations.
pub fn raw_len(m: usize, d: usize) -> usize {
    m * (1 + 2 * d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub dim: usize,
    /// Normalised log weights.
    pub log_weights: Vec<f64>,
    /// `m x d` row-major.
    pub means: Vec<f64>,
    pub log_sds: Vec<f64>,
}

impl Mixture {
    pub fn from_raw(raw: &[f64], m: usize, d: usize) -> Self {
        let logits = &raw[..m];
        let lse = log_sum_exp(logits);
        Self {
            dim: d,
            log_weights: logits.iter().map(|&a| a - lse).collect(),
            means: raw[m..m + m * d].to_vec(),
            log_sds: raw[m + m * d..m + 2 * m * d].iter().map(|&s| s.clamp(LOG_SD_MIN, LOG_SD_MAX)).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = self.log_weights[k];
        for j in 0..d {
            let ls = self.log_sds[k * d + j];
            let u = (x[j] - self.means[k * d + j]) * (-ls).exp();
            s += -0.5 * u * u - ls - LN_SQRT_2PI;
        }
        s
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.n_components()).map(|k| self.component_log_density(k, x)).collect();
        log_sum_exp(&terms)
    }

    /// Component by its weight, then a Gaussian draw.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let k = rng.categorical(&self.weights());
        let d = self.dim;
        (0..d)
            .map(|j| self.means[k * d + j] + self.log_sds[k * d + j].exp() * rng.std_normal())
            .collect()
    }

    /// Image under `x -> shift + scale * x` (componentwise).
    pub fn affine(&self, shift: &[f64], scale: &[f64]) -> Mixture {
        let d = self.dim;
        let mut out = self.clone();
        for k in 0..self.n_components() {
            for j in 0..d {
                out.means[k * d + j] = shift[j] + scale[j] * self.means[k * d + j];
                out.log_sds[k * d + j] = self.log_sds[k * d + j] + scale[j].ln();
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim;
        let w = self.weights();
        (0..d).map(|j| (0..w.len()).map(|k| w[k] * self.means[k * d + j]).sum()).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        let d = self.dim;
        let w = self.weights();
        let mu = self.mean();
        (0..d)
            .map(|j| {
                (0..w.len())
                    .map(|k| {
                        let s2 = (2.0 * self.log_sds[k * d + j]).exp();
                        let dm = self.means[k * d + j] - mu[j];
                        w[k] * (s2 + dm * dm)
                    })
                    .sum()
            })
            .collect()
    }
}

/// Negative log density of `z` under the mixture parameterised by `raw`;
/// writes `d(nll)/d(raw)` into `grad`.
pub fn nll_and_grad(raw: &[f64], m: usize, d: usize, z: &[f64], grad: &mut [f64]) -> f64 {
    let logits = &raw[..m];
    let lse_w = log_sum_exp(logits);
    let mut comp = Vec::with_capacity(m);
    for k in 0..m {
        let mut s = logits[k] - lse_w;
        for j in 0..d {
            let raw_ls = raw[m + m * d + k * d + j];
            let ls = raw_ls.clamp(LOG_SD_MIN, LOG_SD_MAX);
            let u = (z[j] - raw[m + k * d + j]) * (-ls).exp();
            s += -0.5 * u * u - ls - LN_SQRT_2PI;
        }
        comp.push(s);
    }
    let lse = log_sum_exp(&comp);
    for k in 0..m {
        let r = (comp[k] - lse).exp();
        grad[k] = (logits[k] - lse_w).exp() - r;
        for j in 0..d {
            let raw_ls = raw[m + m * d + k * d + j];
            let ls = raw_ls.clamp(LOG_SD_MIN, LOG_SD_MAX);
            let inv = (-ls).exp();
            let diff = z[j] - raw[m + k * d + j];
            let u = diff * inv;
            grad[m + k * d + j] = -r * diff * inv * inv;
            grad[m + m * d + k * d + j] = if (LOG_SD_MIN..=LOG_SD_MAX).contains(&raw_ls) { -r * (u * u - 1.0) } else { 0.0 };
        }
    }
    -lse
}
