//! Rank-normalised split-R-hat and effective sample size.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randkit::special::norm_ppf;
#[allow(unused_imports)]
use crate::float::Float;

const MIN_DRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// `None` where the statistic is undefined (constant draws).
    pub rhat: Vec<Option<f64>>,
    pub ess_bulk: Vec<Option<f64>>,
}

impl ChainDiagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().flatten().copied().reduce(f64::max)
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.ess_bulk.iter().flatten().copied().reduce(f64::min)
    }

    pub fn any_undefined(&self) -> bool {
        self.rhat.iter().chain(&self.ess_bulk).any(Option::is_none)
    }
}

fn check(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Precondition(alloc::format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < MIN_DRAWS {
        return Err(Error::Precondition(alloc::format!("need at least {MIN_DRAWS} draws per chain, got {n}")));
    }
    Ok(n)
}

fn split(chains: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let h = n / 2;
    chains.iter().flat_map(|c| [c[..h].to_vec(), c[n - h..n].to_vec()]).collect()
}

/// Normal scores of the pooled ranks (average rank for ties).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (c, xs) in chains.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            all.push((x, c, i));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len() as f64;
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| alloc::vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        let z = norm_ppf((r - 0.375) / (s + 0.25));
        for e in &all[i..=j] {
            out[e.1][e.2] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let x0 = chains[0][0];
    chains.iter().flatten().all(|&x| x == x0)
}

fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let m = chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Rank-normalised split R-hat: the larger of the bulk and folded versions.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let n = check(chains)?;
    if is_constant(chains) {
        return Ok(None);
    }
    let s = split(chains, n);
    let bulk = basic_rhat(&rank_normalize(&s));
    let mut pooled: Vec<f64> = s.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let med = pooled[pooled.len() / 2];
    let folded: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = if is_constant(&folded) { bulk } else { basic_rhat(&rank_normalize(&folded)) };
    let r = bulk.max(tail);
    Ok(r.is_finite().then_some(r))
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
fn ess_raw(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |c: usize, lag: usize| -> f64 {
        let x = &chains[c];
        let mu = means[c];
        (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
    };
    let var0: Vec<f64> = (0..m).map(|c| acov(c, 0) * n as f64 / (n as f64 - 1.0)).collect();
    let w = mean(&var0);
    let grand = mean(&means);
    let b_over_n = if m > 1 { means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return None;
    }
    let rho = |lag: usize| -> f64 {
        let a = (0..m).map(|c| acov(c, lag)).sum::<f64>() / m as f64;
        1.0 - (w - a) / var_plus
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pk = rho(2 * k) + rho(2 * k + 1);
        if pk <= 0.0 {
            break;
        }
        pk = pk.min(prev);
        prev = pk;
        tau += 2.0 * pk;
        k += 1;
    }
    let tau = tau.max(1.0 / ((m * n) as f64).log10());
    Some((m * n) as f64 / tau)
}

/// Bulk effective sample size on rank-normalised split chains; `None` for
/// constant draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let n = check(chains)?;
    if is_constant(chains) {
        return Ok(None);
    }
    Ok(ess_raw(&rank_normalize(&split(chains, n))))
}

/// Per-coordinate diagnostics for chains of vector draws.
pub fn chain_diagnostics(chains: &[Vec<Vec<f64>>]) -> Result<ChainDiagnostics> {
    let d = chains.first().and_then(|c| c.first()).map_or(0, Vec::len);
    let mut rhat = Vec::with_capacity(d);
    let mut ess_bulk = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| x[j]).collect()).collect();
        rhat.push(split_rhat(&col)?);
        ess_bulk.push(ess(&col)?);
    }
    Ok(ChainDiagnostics { rhat, ess_bulk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::RngStream;

    fn iid(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 0);
        (0..m).map(|_| (0..n).map(|_| rng.std_normal()).collect()).collect()
    }

    fn ar1(m: usize, n: usize, phi: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 0);
        (0..m)
            .map(|_| {
                let mut x = 0.0;
                (0..n)
                    .map(|_| {
                        x = phi * x + (1.0 - phi * phi).sqrt() * rng.std_normal();
                        x
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_mix() {
        let c = iid(4, 1000, 1);
        let r = split_rhat(&c).unwrap().unwrap();
        assert!((0.99..=1.01).contains(&r), "{r}");
        let e = ess(&c).unwrap().unwrap();
        assert!((3000.0..5000.0).contains(&e), "{e}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // ESS / N = (1 - phi) / (1 + phi)
        let phi = 0.8;
        let c = ar1(4, 5000, phi, 2);
        let e = ess(&c).unwrap().unwrap();
        let theory = 20000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((e / theory - 1.0).abs() < 0.2, "{e} vs {theory}");
    }

    #[test]
    fn shifted_chain_flags_rhat() {
        let mut c = iid(4, 500, 3);
        for x in &mut c[0] {
            *x += 10.0;
        }
        assert!(split_rhat(&c).unwrap().unwrap() > 1.5);
    }

    #[test]
    fn constant_chain_is_undefined() {
        let c = alloc::vec![alloc::vec![1.0; 200]; 4];
        assert_eq!(ess(&c).unwrap(), None);
        assert_eq!(split_rhat(&c).unwrap(), None);
    }

    #[test]
    fn too_few_draws_or_chains_rejected() {
        assert!(matches!(ess(&iid(1, 500, 4)), Err(Error::Precondition(_))));
        assert!(matches!(split_rhat(&iid(4, 50, 4)), Err(Error::Precondition(_))));
    }
}
