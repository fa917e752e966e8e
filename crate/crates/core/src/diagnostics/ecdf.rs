//! Simultaneous ECDF bands for discrete uniform ranks, by Monte Carlo under
//! the null.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::sbc::RankMatrix;
use crate::error::{Error, Result};
use crate::randkit::special::ln_gamma;
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

/// Band for `m` ranks on `0..=k`. At grid point `z_j = (j + 1) / (k + 1)` the
/// count of ranks `<= j` is `Binomial(m, z_j)` under uniformity; the band
/// keeps counts whose two-sided pointwise tail probability is at least
/// `gamma`, with `gamma` chosen so that the whole ECDF stays inside with
/// probability `level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfBand {
    pub m: usize,
    pub k: usize,
    pub level: f64,
    pub gamma: f64,
    pub grid: Vec<f64>,
    /// ECDF bounds (fractions of `m`).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfVerdict {
    pub param: String,
    pub inside: bool,
    pub ecdf: Vec<f64>,
    /// Smallest pointwise tail probability along the ECDF.
    pub min_tail: f64,
}

/// Per-test level giving joint coverage `level` over `n` independent tests.
pub fn family_level(level: f64, n: usize) -> f64 {
    level.powf(1.0 / n.max(1) as f64)
}

fn binomial_cdf(m: usize, p: f64) -> Vec<f64> {
    let lf = ln_gamma(m as f64 + 1.0);
    let mut acc = 0.0;
    (0..=m)
        .map(|c| {
            let ln = lf - ln_gamma(c as f64 + 1.0) - ln_gamma((m - c) as f64 + 1.0) + c as f64 * p.ln() + (m - c) as f64 * (1.0 - p).ln();
            acc += ln.exp();
            acc.min(1.0)
        })
        .collect()
}

impl EcdfBand {
    pub fn simulate(m: usize, k: usize, level: f64, n_sim: usize, rng: &mut RngStream) -> Result<Self> {
        if m < 100 {
            return Err(Error::Precondition(alloc::format!("ECDF bands need at least 100 ranks, got {m}")));
        }
        if k == 0 || !(0.0..1.0).contains(&level) || n_sim == 0 {
            return Err(Error::Precondition("ECDF band needs k >= 1, level in [0, 1) and replicates".into()));
        }
        let grid: Vec<f64> = (0..k).map(|j| (j + 1) as f64 / (k + 1) as f64).collect();
        let cdf: Vec<Vec<f64>> = grid.iter().map(|&z| binomial_cdf(m, z)).collect();
        let mut band = Self {
            m,
            k,
            level,
            gamma: 0.0,
            grid,
            lower: Vec::new(),
            upper: Vec::new(),
            cdf,
        };
        let mut mins: Vec<f64> = (0..n_sim)
            .map(|_| {
                let ranks: Vec<u32> = (0..m).map(|_| rng.below(k + 1) as u32).collect();
                band.min_tail(&ranks)
            })
            .collect();
        mins.sort_by(f64::total_cmp);
        band.gamma = mins[((1.0 - level) * n_sim as f64).floor() as usize];
        for j in 0..k {
            let ok: Vec<usize> = (0..=m).filter(|&c| band.tail(j, c) >= band.gamma).collect();
            band.lower.push(*ok.first().unwrap_or(&0) as f64 / m as f64);
            band.upper.push(*ok.last().unwrap_or(&m) as f64 / m as f64);
        }
        Ok(band)
    }

    fn tail(&self, j: usize, c: usize) -> f64 {
        let low = self.cdf[j][c];
        let high = 1.0 - if c == 0 { 0.0 } else { self.cdf[j][c - 1] };
        (2.0 * low.min(high)).min(1.0)
    }

    fn counts(&self, ranks: &[u32]) -> Vec<usize> {
        let mut hist = alloc::vec![0usize; self.k + 1];
        for &r in ranks {
            hist[(r as usize).min(self.k)] += 1;
        }
        let mut acc = 0;
        hist[..self.k]
            .iter()
            .map(|h| {
                acc += h;
                acc
            })
            .collect()
    }

    pub fn min_tail(&self, ranks: &[u32]) -> f64 {
        self.counts(ranks)
            .iter()
            .enumerate()
            .map(|(j, &c)| self.tail(j, c))
            .fold(1.0, f64::min)
    }

    pub fn ecdf(&self, ranks: &[u32]) -> Vec<f64> {
        self.counts(ranks).iter().map(|&c| c as f64 / ranks.len() as f64).collect()
    }

    pub fn contains(&self, ranks: &[u32]) -> bool {
        ranks.len() == self.m && self.min_tail(ranks) >= self.gamma
    }
}

/// Band at `level` (10^4 null replicates) and a verdict per parameter.
pub fn ecdf_uniformity(ranks: &RankMatrix, level: f64, rng: &mut RngStream) -> Result<(EcdfBand, Vec<EcdfVerdict>)> {
    let band = EcdfBand::simulate(ranks.n_sims(), ranks.k, level, 10_000, rng)?;
    let verdicts = (0..ranks.n_params)
        .map(|j| {
            let col = ranks.column(j);
            EcdfVerdict {
                param: ranks.param_names.get(j).cloned().unwrap_or_default(),
                inside: band.contains(&col),
                ecdf: band.ecdf(&col),
                min_tail: band.min_tail(&col),
            }
        })
        .collect();
    Ok((band, verdicts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_matches_level() {
        let mut rng = RngStream::new(1, 0);
        let band = EcdfBand::simulate(200, 100, 0.95, 10_000, &mut rng).unwrap();
        let trials = 1000;
        let inside = (0..trials)
            .filter(|_| {
                let r: Vec<u32> = (0..200).map(|_| rng.below(101) as u32).collect();
                band.contains(&r)
            })
            .count();
        let cov = inside as f64 / trials as f64;
        assert!((cov - 0.95).abs() < 0.02, "{cov}");
        assert!(band.lower.iter().zip(&band.upper).all(|(l, u)| l <= u));
    }

    #[test]
    fn degenerate_ranks_outside() {
        let mut rng = RngStream::new(2, 0);
        let band = EcdfBand::simulate(150, 50, 0.95, 2000, &mut rng).unwrap();
        assert!(!band.contains(&[0u32; 150]));
        assert!(!band.contains(&[50u32; 150]));
    }

    #[test]
    fn small_m_rejected() {
        assert!(EcdfBand::simulate(50, 10, 0.95, 100, &mut RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn family_level_composes() {
        assert!((family_level(0.95, 33).powi(33) - 0.95).abs() < 1e-12);
        assert_eq!(family_level(0.9, 1), 0.9);
    }
}
