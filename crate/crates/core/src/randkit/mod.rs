//! Deterministic random streams and the distributions used by the simulators.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`. Child
//! streams are derived by mixing a label into the stream id, so a dataset,
//! a household replicate or a bootstrap resample can each own an independent
//! stream regardless of the order in which work is scheduled.

pub mod special;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, LogNormal, Normal, Open01, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
#[allow(unused_imports)]
use crate::float::Float;

pub use special::{gamma_p, gamma_q, ln_gamma, log_sum_exp, logistic, logit, norm_cdf, norm_ppf};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A single-owner random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for `label`. Does not advance `self`.
    pub fn derive(&self, label: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngStream::new(self.seed, id)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        Open01.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn std_normal(&mut self) -> f64 {
        self.inner.sample(rand_distr::StandardNormal)
    }

    pub fn exp1(&mut self) -> f64 {
        self.inner.sample(rand_distr::Exp1)
    }

    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        Geometric::new(p).map(|g| g.sample(&mut self.inner)).unwrap_or(u64::MAX)
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        let x: f64 = Poisson::new(lambda).map(|d| d.sample(&mut self.inner)).unwrap_or(0.0);
        x as u64
    }

    pub fn gamma(&mut self, spec: GammaSpec) -> f64 {
        Gamma::new(spec.shape, spec.scale)
            .map(|g| g.sample(&mut self.inner))
            .unwrap_or(f64::NAN)
    }

    /// Normal draw truncated to `[lo, hi]` by inverse-CDF sampling.
    pub fn truncated_normal(&mut self, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
        let a = norm_cdf((lo - mean) / sd);
        let b = norm_cdf((hi - mean) / sd);
        let u = a + (b - a) * self.uniform_open();
        let x = mean + sd * norm_ppf(u);
        x.max(lo).min(hi)
    }

    /// Index drawn with probability proportional to `weights` (linear scan).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Binomial count of successes in `n` trials.
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        rand_distr::Binomial::new(n, p).map(|b| b.sample(&mut self.inner)).unwrap_or(0)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Gamma distribution with `mean = shape * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub shape: f64,
    pub scale: f64,
}

impl GammaSpec {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(domain!("gamma requires shape > 0 and scale > 0, got ({shape}, {scale})"));
        }
        Ok(Self { shape, scale })
    }

    pub fn from_shape_rate(shape: f64, rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(domain!("gamma rate must be positive, got {rate}"));
        }
        Self::new(shape, 1.0 / rate)
    }

    /// Parameterization by mean `m` and coefficient of variation `v`:
    /// `shape = 1/v^2`, `scale = m v^2`.
    pub fn from_mean_cv(m: f64, v: f64) -> Result<Self> {
        if !(m > 0.0 && v > 0.0) {
            return Err(domain!("mean and coefficient of variation must be positive, got ({m}, {v})"));
        }
        Self::new(1.0 / (v * v), m * v * v)
    }

    pub fn from_mean_sd(mean: f64, sd: f64) -> Result<Self> {
        if !(mean > 0.0 && sd > 0.0) {
            return Err(domain!("mean and sd must be positive, got ({mean}, {sd})"));
        }
        Self::from_mean_cv(mean, sd / mean)
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn mode(&self) -> f64 {
        ((self.shape - 1.0) * self.scale).max(0.0)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return if self.shape < 1.0 {
                f64::INFINITY
            } else if self.shape == 1.0 {
                -self.scale.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        (self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()
    }

    /// Density; zero for negative `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// CDF via the regularized lower incomplete gamma function; zero for
    /// negative `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        gamma_p(self.shape, x / self.scale)
    }
}

/// The distributions the simulators draw from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    Gamma(GammaSpec),
    Normal { mean: f64, sd: f64 },
    /// Log-normal with log-scale mean and log-scale sd.
    LogNormal { log_mean: f64, log_sd: f64 },
    Bernoulli(f64),
    /// Failures before the first success; support `{0, 1, 2, ...}`.
    Geometric(f64),
    Poisson(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Gamma(g) => g.shape > 0.0 && g.scale > 0.0,
            Dist::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            Dist::LogNormal { log_mean, log_sd } => log_mean.is_finite() && log_sd > 0.0,
            Dist::Bernoulli(p) => (0.0..=1.0).contains(&p),
            Dist::Geometric(p) => p > 0.0 && p <= 1.0,
            Dist::Poisson(l) => l >= 0.0 && l.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(domain!("distribution parameters out of domain: {self:?}"))
        }
    }

    /// One draw; integer-valued distributions return their count as `f64`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Dist::Gamma(g) => rng.gamma(g),
            Dist::Normal { mean, sd } => {
                Normal::new(mean, sd).map_err(|e| domain!("{e}"))?.sample(rng)
            }
            Dist::LogNormal { log_mean, log_sd } => LogNormal::new(log_mean, log_sd)
                .map_err(|e| domain!("{e}"))?
                .sample(rng),
            Dist::Bernoulli(p) => {
                if rng.bernoulli(p) {
                    1.0
                } else {
                    0.0
                }
            }
            Dist::Geometric(p) => rng.geometric(p) as f64,
            Dist::Poisson(l) => rng.poisson(l) as f64,
            Dist::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Gamma(g) => g.mean(),
            Dist::Normal { mean, .. } => mean,
            Dist::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
            Dist::Bernoulli(p) => p,
            Dist::Geometric(p) => (1.0 - p) / p,
            Dist::Poisson(l) => l,
            Dist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Dist::Gamma(g) => g.variance(),
            Dist::Normal { sd, .. } => sd * sd,
            Dist::LogNormal { log_mean, log_sd } => {
                let s2 = log_sd * log_sd;
                (s2.exp() - 1.0) * (2.0 * log_mean + s2).exp()
            }
            Dist::Bernoulli(p) => p * (1.0 - p),
            Dist::Geometric(p) => (1.0 - p) / (p * p),
            Dist::Poisson(l) => l,
            Dist::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_cv_parameterization() {
        let g = GammaSpec::from_mean_cv(1.0, 0.25).unwrap();
        assert!((g.shape - 16.0).abs() < 1e-12);
        assert!((g.scale - 0.0625).abs() < 1e-15);
        let sd_over_mean = g.variance().sqrt() / g.mean();
        assert!((sd_over_mean - 0.25).abs() < 1e-12);

        let e = GammaSpec::from_mean_cv(0.0002993, 1.0).unwrap();
        assert_eq!(e.shape, 1.0);
        assert!((e.scale - 0.0002993).abs() < 1e-18);

        for &(c, v) in &[(3.7, 0.1), (0.002, 2.0), (12.0, 0.9)] {
            let g = GammaSpec::from_mean_cv(c, v).unwrap();
            assert!((g.shape * g.scale - c).abs() <= 1e-12 * c);
        }
        assert!(GammaSpec::from_mean_cv(0.0, 1.0).is_err());
        assert!(GammaSpec::from_mean_cv(1.0, -1.0).is_err());
    }

    #[test]
    fn cdf_edges_and_monotonicity() {
        let g = GammaSpec::from_shape_rate(3.351, 1.1098).unwrap();
        assert_eq!(g.cdf(0.0), 0.0);
        assert_eq!(g.cdf(-1.0), 0.0);
        assert_eq!(g.pdf(-1.0), 0.0);
        assert!((g.cdf(1e4) - 1.0).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..2000 {
            let c = g.cdf(i as f64 * 0.01);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn alpha_kernel_mode_is_grid_maximum() {
        let g = GammaSpec::from_shape_rate(2.0, 0.44).unwrap();
        let mode = (g.shape - 1.0) / 0.44;
        assert!((mode - 2.272_727_272_727).abs() < 1e-9);
        let peak = g.pdf(mode);
        for i in 0..20_000 {
            assert!(g.pdf(i as f64 * 0.001) <= peak + 1e-15);
        }
    }

    #[test]
    fn streams_reproduce_and_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: alloc::vec::Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: alloc::vec::Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: alloc::vec::Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(a.derive(1).next_u64(), a.derive(2).next_u64());
    }

    #[test]
    fn bernoulli_one_and_domain_errors() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            assert_eq!(Dist::Bernoulli(1.0).sample(&mut rng).unwrap(), 1.0);
        }
        assert!(Dist::Bernoulli(1.5).sample(&mut rng).is_err());
        assert!(Dist::Geometric(0.0).sample(&mut rng).is_err());
        assert!(Dist::Gamma(GammaSpec { shape: -1.0, scale: 1.0 }).sample(&mut rng).is_err());
    }

    #[test]
    fn truncated_normal_stays_in_bounds() {
        let mut rng = RngStream::new(2, 0);
        for _ in 0..5000 {
            let x = rng.truncated_normal(15.0, 10.0, 0.0, 30.0);
            assert!((0.0..=30.0).contains(&x));
        }
    }
}
