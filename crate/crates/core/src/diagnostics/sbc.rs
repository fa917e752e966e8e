//! Rank statistics of true parameters among posterior draws.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::randkit::special::gamma_q;
use crate::randkit::RngStream;

/// `m x p` ranks in `0..=k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub n_params: usize,
    pub k: usize,
    pub param_names: Vec<String>,
    pub ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn n_sims(&self) -> usize {
        self.ranks.len() / self.n_params.max(1)
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        self.ranks.chunks(self.n_params).map(|r| r[j]).collect()
    }

    /// Pearson chi-square test of uniform ranks over `bins` equal bins;
    /// returns the p-value per parameter.
    pub fn chi_square_pvalues(&self, bins: usize) -> Vec<f64> {
        let m = self.n_sims() as f64;
        (0..self.n_params)
            .map(|j| {
                let mut counts = alloc::vec![0.0; bins];
                for r in self.column(j) {
                    counts[(r as usize * bins) / (self.k + 1)] += 1.0;
                }
                let stat: f64 = (0..bins)
                    .map(|b| {
                        let lo = (b * (self.k + 1)).div_ceil(bins);
                        let hi = ((b + 1) * (self.k + 1)).div_ceil(bins);
                        let e = m * (hi - lo) as f64 / (self.k + 1) as f64;
                        (counts[b] - e) * (counts[b] - e) / e
                    })
                    .sum();
                gamma_q((bins - 1) as f64 / 2.0, stat / 2.0)
            })
            .collect()
    }
}

/// Number of draws below `truth`; ties are split uniformly at random.
pub fn rank_of(truth: f64, draws: &[f64], rng: &mut RngStream) -> u32 {
    let below = draws.iter().filter(|&&x| x < truth).count();
    let ties = draws.iter().filter(|&&x| x == truth).count();
    (below + if ties > 0 { rng.below(ties + 1) } else { 0 }) as u32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbcRun {
    pub ranks: RankMatrix,
    pub failures: usize,
    /// More than 5% of the simulations failed.
    pub failure_flag: bool,
}

/// Runs `m` simulations. `infer(i, rng)` simulates `theta` from the prior,
/// a dataset given `theta`, and returns `theta` with `k` posterior draws
/// (rows). Simulation `i` uses `rng.derive(i)`; failed simulations are
/// skipped and counted.
pub fn sbc_ranks<F>(m: usize, k: usize, param_names: Vec<String>, rng: &RngStream, mut infer: F) -> Result<SbcRun>
where
    F: FnMut(usize, &mut RngStream) -> Result<(Vec<f64>, Vec<Vec<f64>>)>,
{
    if k == 0 {
        return Err(domain!("SBC needs at least one posterior draw per simulation"));
    }
    let p = param_names.len();
    let mut ranks = Vec::with_capacity(m * p);
    let mut failures = 0;
    for i in 0..m {
        let mut r = rng.derive(i as u64);
        match infer(i, &mut r) {
            Ok((theta, draws)) => {
                if theta.len() != p || draws.len() != k {
                    return Err(domain!("simulation {i} returned {} parameters and {} draws", theta.len(), draws.len()));
                }
                let mut jitter = r.derive(u64::MAX);
                for j in 0..p {
                    let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
                    ranks.push(rank_of(theta[j], &col, &mut jitter));
                }
            }
            Err(_) => failures += 1,
        }
    }
    Ok(SbcRun {
        ranks: RankMatrix {
            n_params: p,
            k,
            param_names,
            ranks,
        },
        failures,
        failure_flag: failures as f64 > 0.05 * m as f64,
    })
}
