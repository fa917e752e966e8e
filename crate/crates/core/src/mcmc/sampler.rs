//! Adaptive random-walk Metropolis over blocks of coordinates.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

/// Unnormalised log density with a block structure.
pub trait Target {
    fn dim(&self) -> usize;

    /// Coordinate blocks updated in turn; the default is one block.
    fn blocks(&self) -> Vec<Range<usize>> {
        alloc::vec![0..self.dim()]
    }

    fn log_density(&self, x: &[f64]) -> f64;

    /// Log density up to terms that do not depend on block `b`.
    fn block_log_density(&self, _b: usize, x: &[f64]) -> f64 {
        self.log_density(x)
    }

    /// Whether accepting a move in block `accepted` changes the value of
    /// `block_log_density(other, ..)`.
    fn refreshes(&self, _accepted: usize, _other: usize) -> bool {
        true
    }

    /// Initial proposal standard deviation per coordinate.
    fn initial_scale(&self) -> Vec<f64> {
        alloc::vec![1.0; self.dim()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub steps: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    pub adapt_window: usize,
    /// Lower bound on the per-block proposal multiplier.
    pub min_scale: f64,
    /// Coordinates stored per draw; `None` keeps all.
    pub record: Option<Range<usize>>,
    pub log_proposals: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 2000,
            steps: 5000,
            thin: 1,
            target_acceptance: 0.234,
            adapt_window: 50,
            min_scale: 1e-4,
            record: None,
            log_proposals: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub block: usize,
    pub current: f64,
    pub proposed: f64,
    pub ln_u: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    /// Post-burn-in acceptance rate per block.
    pub acceptance: Vec<f64>,
    /// Final proposal multiplier per block.
    pub scales: Vec<f64>,
    pub final_state: Vec<f64>,
    pub warnings: Vec<String>,
    pub proposals: Vec<ProposalRecord>,
}

impl Chain {
    pub fn mean_acceptance(&self) -> f64 {
        if self.acceptance.is_empty() {
            return 0.0;
        }
        self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64
    }
}

/// Block-wise Metropolis with Gaussian proposals `x_b + s_b * scale * N(0, I)`.
/// During burn-in `ln s_b` moves by `(rate - target) / sqrt(window)` after
/// every adaptation window.
pub fn metropolis_sample<T: Target + ?Sized>(target: &T, init: &[f64], cfg: &McmcConfig, rng: &mut RngStream) -> Result<Chain> {
    if init.len() != target.dim() {
        return Err(domain!("initial state has {} coordinates, target has {}", init.len(), target.dim()));
    }
    let lp0 = target.log_density(init);
    if !lp0.is_finite() {
        return Err(domain!("log density at the initial state is {lp0}"));
    }
    let blocks = target.blocks();
    let base = target.initial_scale();
    let nb = blocks.len();
    let mut x = init.to_vec();
    let mut block_lp: Vec<f64> = (0..nb).map(|b| target.block_log_density(b, &x)).collect();
    let mut stale = alloc::vec![false; nb];
    let mut scale = alloc::vec![1.0; nb];
    let mut win_acc = alloc::vec![0usize; nb];
    let mut post_acc = alloc::vec![0usize; nb];
    let mut windows = 0usize;
    let record = cfg.record.clone().unwrap_or(0..target.dim());
    let thin = cfg.thin.max(1);
    let mut chain = Chain {
        draws: Vec::new(),
        log_density: Vec::new(),
        acceptance: alloc::vec![0.0; nb],
        scales: Vec::new(),
        final_state: Vec::new(),
        warnings: Vec::new(),
        proposals: Vec::new(),
    };
    let total = cfg.burn_in + cfg.steps;
    let mut prop = x.clone();
    for it in 0..total {
        for (b, r) in blocks.iter().enumerate() {
            prop.copy_from_slice(&x);
            for i in r.clone() {
                prop[i] += scale[b] * base[i] * rng.std_normal();
            }
            if stale[b] {
                block_lp[b] = target.block_log_density(b, &x);
                stale[b] = false;
            }
            let cur = block_lp[b];
            let new = target.block_log_density(b, &prop);
            let ln_u = rng.uniform_open().ln();
            let accepted = new.is_finite() && ln_u < new - cur;
            if cfg.log_proposals {
                chain.proposals.push(ProposalRecord {
                    block: b,
                    current: cur,
                    proposed: new,
                    ln_u,
                    accepted,
                });
            }
            if accepted {
                x[r.clone()].copy_from_slice(&prop[r.clone()]);
                block_lp[b] = new;
                for (bb, st) in stale.iter_mut().enumerate() {
                    if bb != b && target.refreshes(b, bb) {
                        *st = true;
                    }
                }
                if it < cfg.burn_in {
                    win_acc[b] += 1;
                } else {
                    post_acc[b] += 1;
                }
            }
        }
        if it < cfg.burn_in && (it + 1) % cfg.adapt_window.max(1) == 0 {
            windows += 1;
            for b in 0..nb {
                let rate = win_acc[b] as f64 / cfg.adapt_window.max(1) as f64;
                scale[b] *= ((rate - cfg.target_acceptance) / (windows as f64).sqrt()).exp();
                if win_acc[b] == 0 && scale[b] <= cfg.min_scale {
                    chain.warnings.push(alloc::format!("block {b}: adaptation window {windows} rejected every proposal at the step-size floor"));
                }
                scale[b] = scale[b].max(cfg.min_scale);
                win_acc[b] = 0;
            }
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % thin == 0 {
            chain.draws.push(x[record.clone()].to_vec());
            chain.log_density.push(target.log_density(&x));
        }
    }
    if cfg.steps == 0 {
        chain.draws.push(x[record.clone()].to_vec());
        chain.log_density.push(target.log_density(&x));
    }
    chain.acceptance = post_acc.iter().map(|&a| a as f64 / cfg.steps.max(1) as f64).collect();
    chain.scales = scale;
    chain.final_state = x;
    Ok(chain)
}

/// Independent chains; chain `c` starts at `inits[c]` with stream
/// `rng.derive(c)`.
pub fn run_chains<T: Target + ?Sized>(target: &T, inits: &[Vec<f64>], cfg: &McmcConfig, rng: &RngStream) -> Result<Vec<Chain>> {
    inits
        .iter()
        .enumerate()
        .map(|(c, x)| metropolis_sample(target, x, cfg, &mut rng.derive(c as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal(usize);
    impl Target for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    struct Bimodal;
    impl Target for Bimodal {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            let a = -0.5 * (x[0] - 3.0).powi(2);
            let b = -0.5 * (x[0] + 3.0).powi(2);
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        }
        fn initial_scale(&self) -> Vec<f64> {
            alloc::vec![4.0]
        }
    }

    #[test]
    fn standard_normal_moments() {
        let cfg = McmcConfig { burn_in: 2000, steps: 5000, ..Default::default() };
        let chains = run_chains(&StdNormal(1), &alloc::vec![alloc::vec![0.5]; 4], &cfg, &RngStream::new(1, 0)).unwrap();
        let xs: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().map(|d| d[0])).collect();
        let (m, v) = crate::diagnostics::mean_var(&xs);
        assert!(m.abs() < 0.05, "{m}");
        assert!((0.9..=1.1).contains(&v), "{v}");
        for c in &chains {
            assert!((0.0..=1.0).contains(&c.acceptance[0]));
        }
    }

    #[test]
    fn bimodal_modes_all_visited() {
        let cfg = McmcConfig { burn_in: 1000, steps: 5000, target_acceptance: 0.3, ..Default::default() };
        let chains = run_chains(&Bimodal, &[alloc::vec![3.0], alloc::vec![-3.0], alloc::vec![3.0], alloc::vec![-3.0]], &cfg, &RngStream::new(2, 0)).unwrap();
        let xs: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().map(|d| d[0])).collect();
        assert!(xs.iter().any(|&x| x > 2.0) && xs.iter().any(|&x| x < -2.0));
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let cfg = McmcConfig { burn_in: 0, steps: 0, ..Default::default() };
        let c = metropolis_sample(&StdNormal(2), &[0.3, -0.1], &cfg, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(c.draws, alloc::vec![alloc::vec![0.3, -0.1]]);
    }

    #[test]
    fn decisions_follow_metropolis_ratio() {
        let cfg = McmcConfig { burn_in: 100, steps: 300, log_proposals: true, ..Default::default() };
        let c = metropolis_sample(&StdNormal(3), &[0.0; 3], &cfg, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(c.proposals.len(), 400);
        for p in &c.proposals {
            assert_eq!(p.accepted, p.ln_u < p.proposed - p.current);
        }
    }

    #[test]
    fn hopeless_target_warns_at_floor() {
        struct Spike;
        impl Target for Spike {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                if x[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY }
            }
        }
        let cfg = McmcConfig { burn_in: 5000, steps: 10, min_scale: 0.5, ..Default::default() };
        let c = metropolis_sample(&Spike, &[0.0], &cfg, &mut RngStream::new(5, 0)).unwrap();
        assert!(!c.warnings.is_empty());
    }
}
