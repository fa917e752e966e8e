//! Beta-Bernoulli prevalence toy with a closed-form posterior.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Result};
use crate::npe::set::EncodedSet;
use crate::randkit::{GammaSpec, RngStream};
use crate::sim::JointSimulator;
use crate::transform::{Bijection, ParamTransform};
#[allow(unused_imports)]
use crate::float::Float;

/// `rho ~ Beta(a, b)`, `n` Bernoulli(rho) outcomes, no selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaBernoulli {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl BetaBernoulli {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || n == 0 {
            return Err(domain!("Beta-Bernoulli needs a, b > 0 and n >= 1"));
        }
        Ok(Self { a, b, n })
    }

    pub fn sample_rho(&self, rng: &mut RngStream) -> f64 {
        let x = rng.gamma(GammaSpec { shape: self.a, scale: 1.0 });
        let y = rng.gamma(GammaSpec { shape: self.b, scale: 1.0 });
        (x / (x + y)).clamp(1e-12, 1.0 - 1e-12)
    }

    /// Posterior `Beta(a + k, b + n - k)` mean and sd.
    pub fn posterior_moments(&self, successes: usize) -> (f64, f64) {
        let a = self.a + successes as f64;
        let b = self.b + (self.n - successes) as f64;
        let s = a + b;
        (a / s, (a * b / (s * s * (s + 1.0))).sqrt())
    }

    pub fn successes(obs: &[u8]) -> usize {
        obs.iter().filter(|&&y| y == 1).count()
    }
}

impl JointSimulator for BetaBernoulli {
    type Obs = Vec<u8>;

    fn param_names(&self) -> Vec<String> {
        vec!["rho".into()]
    }

    fn transform(&self) -> ParamTransform {
        ParamTransform::new(vec![Bijection::Logit])
    }

    fn n_conditions(&self) -> usize {
        1
    }

    fn row_dim(&self) -> usize {
        2
    }

    fn condition_dim(&self) -> usize {
        0
    }

    fn draw(&self, _condition: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<u8>)> {
        let rho = self.sample_rho(rng);
        let ys = (0..self.n).map(|_| rng.bernoulli(rho) as u8).collect();
        Ok((vec![rho], ys))
    }

    fn encode(&self, obs: &Vec<u8>) -> Result<EncodedSet> {
        let rows = obs.iter().flat_map(|&y| [(y == 0) as u8 as f64, y as f64]).collect();
        Ok(EncodedSet::flat(2, rows, Vec::new())?.canonical())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_moments_closed_form() {
        let m = BetaBernoulli::new(2.0, 8.0, 40).unwrap();
        let (mean, sd) = m.posterior_moments(10);
        assert!((mean - 12.0 / 50.0).abs() < 1e-15);
        assert!((sd - (12.0f64 * 38.0 / (2500.0 * 51.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn prior_mean_matches_beta() {
        let m = BetaBernoulli::new(2.0, 8.0, 1).unwrap();
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| m.sample_rho(&mut rng)).sum::<f64>() / n as f64;
        let sd = (2.0f64 * 8.0 / (100.0 * 11.0)).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn encoding_collapses_to_counts() {
        let m = BetaBernoulli::new(1.0, 1.0, 5).unwrap();
        let e = m.encode(&vec![1, 0, 1, 1, 0]).unwrap();
        assert_eq!(e.n_rows(), 2);
        assert_eq!(e.rows, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(e.weights, vec![3.0, 2.0]);
    }
}
