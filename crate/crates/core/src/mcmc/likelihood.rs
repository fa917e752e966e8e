//! Latent-time household likelihood.
//!
//! Each detected person carries a continuous infection time `tau`; its day
//! index `a = floor(tau)` drives the hazard exactly as in the daily
//! simulator, so the hazard is piecewise constant on day cells and
//! integrating the density over a cell reproduces the daily infection
//! probability `1 - exp(-lambda)`. Undetected members are treated as
//! uninfected through the end of follow-up.

use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use super::sampler::Target;
use crate::error::{domain, Result};
use crate::household::{size_weight, AgeGroup, DetectionStatus, HouseholdParams, HouseholdPrior, KernelTable, StudyConfig, StudyDataset, VariantConfig};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

/// Days after infection during which a test is positive.
const POSITIVE_SPAN: i64 = 15;
/// Parameters sampled on the log scale (all but `delta`).
const LOG_SCALE: [bool; 11] = [true, false, true, true, true, true, true, true, true, true, true];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    /// Weight `c` of the quadratic penalty for leaving the test window.
    pub penalty: f64,
    /// First day at risk on the dataset's date scale.
    pub observation_start: i64,
}

impl LikelihoodConfig {
    pub fn for_study(study: &StudyConfig) -> Self {
        Self {
            observation_start: study.date_shift,
            ..Self::default()
        }
    }
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            penalty: 100.0,
            observation_start: 30,
        }
    }
}

#[derive(Clone, Debug)]
struct Person {
    age: AgeGroup,
    protected: bool,
    symptomatic: bool,
    onset: Option<i64>,
    /// Allowed infection days `[lo, hi]`; `tau` should lie in `[lo, hi + 1)`.
    window: (f64, f64),
    latent: Option<usize>,
}

#[derive(Clone, Debug)]
struct House {
    members: Vec<Person>,
    end: f64,
    latents: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct HouseholdLikelihood {
    variant: VariantConfig,
    kernel: Vec<f64>,
    /// `cum[n] = sum_{l=1}^{n} kernel[l]`.
    cum: Vec<f64>,
    incubation_cdf: Vec<f64>,
    houses: Vec<House>,
    n_latent: usize,
    cfg: LikelihoodConfig,
}

impl HouseholdLikelihood {
    pub fn new(ds: &StudyDataset, variant: &VariantConfig, cfg: LikelihoodConfig) -> Result<Self> {
        let kernel = KernelTable::new(variant).pdf;
        let mut cum = alloc::vec![0.0; kernel.len()];
        for l in 1..kernel.len() {
            cum[l] = cum[l - 1] + kernel[l];
        }
        let max_inc = {
            let mut d = 1usize;
            while 1.0 - variant.incubation.cdf(d as f64) > 1e-12 && d < 1000 {
                d += 1;
            }
            d + 1
        };
        let incubation_cdf = (0..=max_inc).map(|d| variant.incubation.cdf(d as f64)).collect();
        let mut houses = Vec::with_capacity(ds.households.len());
        let mut n_latent = 0;
        for h in &ds.households {
            let start = n_latent;
            let mut members = Vec::with_capacity(h.size());
            for p in &h.members {
                let latent = if p.detected() {
                    n_latent += 1;
                    Some(n_latent - 1)
                } else {
                    None
                };
                let window = match p.first_positive() {
                    Some(fp) => {
                        let lp = p.last_positive().unwrap_or(fp);
                        let mut lo = lp - POSITIVE_SPAN;
                        if let Some(ln) = p.last_negative() {
                            lo = lo.max(ln);
                        }
                        let mut hi = fp - 1;
                        if let Some(&(d, _)) = p.tests.iter().find(|t| !t.1 && t.0 > fp) {
                            hi = hi.min(d - POSITIVE_SPAN - 1);
                        }
                        (lo as f64, hi as f64)
                    }
                    None => (f64::NAN, f64::NAN),
                };
                members.push(Person {
                    age: p.age_group,
                    protected: p.protected,
                    symptomatic: p.status == DetectionStatus::Symptomatic,
                    onset: if p.status == DetectionStatus::Symptomatic { p.onset } else { None },
                    window,
                    latent,
                });
            }
            if members.iter().any(|m| m.latent.is_some() && m.window.0.is_nan()) {
                return Err(domain!("detected member without a positive test"));
            }
            houses.push(House {
                members,
                end: h.follow_up_end() as f64,
                latents: start..n_latent,
            });
        }
        Ok(Self {
            variant: variant.clone(),
            kernel,
            cum,
            incubation_cdf,
            houses,
            n_latent,
            cfg,
        })
    }

    pub fn n_households(&self) -> usize {
        self.houses.len()
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    pub fn latent_range(&self, h: usize) -> Range<usize> {
        self.houses[h].latents.clone()
    }

    fn kernel_at(&self, lag: i64) -> f64 {
        if lag <= 0 {
            0.0
        } else {
            self.kernel.get(lag as usize).copied().unwrap_or(0.0)
        }
    }

    fn kernel_cum(&self, n: i64) -> f64 {
        if n <= 0 {
            0.0
        } else {
            self.cum[(n as usize).min(self.cum.len() - 1)]
        }
    }

    /// Integrated kernel exposure from an infector infected on day `a` up to
    /// time `t`.
    fn exposure(&self, a: i64, t: f64) -> f64 {
        let d = t.floor() as i64;
        if d <= a {
            return 0.0;
        }
        self.kernel_cum(d - 1 - a) + (t - d as f64) * self.kernel_at(d - a)
    }

    fn incubation_mass(&self, days: i64) -> f64 {
        // P(floor(I) = days)
        if days < 0 {
            return 0.0;
        }
        let f = |d: i64| self.incubation_cdf.get(d as usize).copied().unwrap_or(1.0);
        f(days + 1) - f(days)
    }

    /// Log likelihood contribution of one household.
    pub fn household_loglik(&self, h: usize, p: &HouseholdParams, tau: &[f64]) -> f64 {
        let house = &self.houses[h];
        let n = house.members.len();
        let w = p.beta * size_weight(n, p.delta);
        let alpha = self.variant.alpha;
        let t0 = self.cfg.observation_start as f64;
        let mut ll = 0.0;
        for (i, mi) in house.members.iter().enumerate() {
            let ti = match mi.latent {
                Some(k) => {
                    let t = tau[k];
                    if !(t >= t0) {
                        return f64::NEG_INFINITY;
                    }
                    t
                }
                None => house.end,
            };
            let ai = ti.floor() as i64;
            let sus = p.susceptibility(mi.age);
            let mut rate = alpha;
            let mut cumulative = alpha * (ti - t0);
            for (j, mj) in house.members.iter().enumerate() {
                let Some(k) = mj.latent else { continue };
                if j == i {
                    continue;
                }
                let aj = tau[k].floor() as i64;
                if aj >= ai {
                    continue;
                }
                let c = w * sus * p.infectivity(mj.age, mj.symptomatic) * p.protection(mj.protected, mi.protected);
                rate += c * self.kernel_at(ai - aj);
                cumulative += c * self.exposure(aj, ti);
            }
            ll -= cumulative;
            if mi.latent.is_none() {
                continue;
            }
            ll += rate.ln();
            let asym = self.variant.asym_prob;
            if mi.symptomatic {
                ll += (1.0 - asym).ln();
                if let Some(d) = mi.onset {
                    ll += self.incubation_mass(d - ai).ln();
                }
            } else {
                ll += asym.ln();
            }
            let (lo, hi) = mi.window;
            let v = (lo - ti).max(0.0) + (ti - (hi + 1.0)).max(0.0);
            ll -= self.cfg.penalty * v * v;
        }
        ll
    }

    pub fn loglik(&self, p: &HouseholdParams, tau: &[f64]) -> f64 {
        (0..self.houses.len()).map(|h| self.household_loglik(h, p, tau)).sum()
    }

    /// Starting infection times: the latest admissible day, kept no later
    /// than the onset, plus half a day.
    pub fn initial_latent(&self, rng: &mut RngStream) -> Vec<f64> {
        let t0 = self.cfg.observation_start as f64;
        let mut tau = alloc::vec![0.0; self.n_latent];
        for house in &self.houses {
            for m in &house.members {
                let Some(k) = m.latent else { continue };
                let (lo, hi) = m.window;
                let mut a = hi;
                if let Some(d) = m.onset {
                    a = a.min(d as f64);
                }
                a = a.max(lo).max(t0);
                tau[k] = a + 0.2 + 0.6 * rng.uniform();
            }
        }
        tau
    }
}

/// Posterior over `[u; tau]` with `u` the parameters on the sampling scale.
#[derive(Clone, Debug)]
pub struct HouseholdPosterior {
    pub likelihood: HouseholdLikelihood,
    pub prior: HouseholdPrior,
    blocks: Vec<Range<usize>>,
    block_house: Vec<usize>,
}

impl HouseholdPosterior {
    pub const N_PARAMS: usize = 11;

    pub fn new(likelihood: HouseholdLikelihood, prior: HouseholdPrior) -> Self {
        let mut blocks = alloc::vec![0..Self::N_PARAMS];
        let mut block_house = alloc::vec![usize::MAX];
        for h in 0..likelihood.n_households() {
            let r = likelihood.latent_range(h);
            if !r.is_empty() {
                blocks.push(r.start + Self::N_PARAMS..r.end + Self::N_PARAMS);
                block_house.push(h);
            }
        }
        Self {
            likelihood,
            prior,
            blocks,
            block_house,
        }
    }

    pub fn to_natural(u: &[f64]) -> Vec<f64> {
        u.iter().zip(LOG_SCALE).map(|(&x, l)| if l { x.exp() } else { x }).collect()
    }

    pub fn to_sampling(theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(LOG_SCALE).map(|(&x, l)| if l { x.ln() } else { x }).collect()
    }

    fn params(u: &[f64]) -> HouseholdParams {
        HouseholdParams::from_slice(&Self::to_natural(&u[..Self::N_PARAMS])).expect("11 parameters")
    }

    /// Prior density on the sampling scale (natural density times the
    /// Jacobian of `exp`).
    pub fn ln_prior(&self, u: &[f64]) -> f64 {
        let p = Self::params(u);
        let jac: f64 = u[..Self::N_PARAMS].iter().zip(LOG_SCALE).filter(|(_, l)| *l).map(|(x, _)| *x).sum();
        self.prior.ln_density(&p) + jac
    }

    /// Chain starting points: prior-centred parameters with jitter and
    /// window-consistent infection times.
    pub fn initial_state(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut x: Vec<f64> = (0..Self::N_PARAMS)
            .map(|j| {
                let centre = if j == 0 { self.prior.beta.mean().ln() } else { 0.0 };
                centre + 0.3 * rng.std_normal()
            })
            .collect();
        x.extend(self.likelihood.initial_latent(rng));
        x
    }
}

impl Target for HouseholdPosterior {
    fn dim(&self) -> usize {
        Self::N_PARAMS + self.likelihood.n_latent()
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        self.blocks.clone()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let lp = self.ln_prior(x);
        if !lp.is_finite() {
            return lp;
        }
        lp + self.likelihood.loglik(&Self::params(x), &x[Self::N_PARAMS..])
    }

    fn block_log_density(&self, b: usize, x: &[f64]) -> f64 {
        if b == 0 {
            return self.log_density(x);
        }
        self.likelihood.household_loglik(self.block_house[b], &Self::params(x), &x[Self::N_PARAMS..])
    }

    fn refreshes(&self, accepted: usize, other: usize) -> bool {
        accepted == 0 || other == 0
    }

    fn initial_scale(&self) -> Vec<f64> {
        let mut s = alloc::vec![0.1; Self::N_PARAMS];
        s.extend(core::iter::repeat_n(0.5, self.likelihood.n_latent()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::household::{ObservedHousehold, ObservedPerson, Scheme, Variant};

    fn person(age: f64, status: DetectionStatus, onset: Option<i64>, tests: Vec<(i64, bool)>) -> ObservedPerson {
        ObservedPerson {
            age_years: age,
            age_group: AgeGroup::from_years(age),
            protected: false,
            status,
            onset,
            tests,
            true_infection: None,
            true_symptomatic: false,
        }
    }

    fn dataset(members: Vec<ObservedPerson>, end: i64) -> StudyDataset {
        StudyDataset {
            variant: Variant::Omicron,
            scheme: Scheme::Random,
            households: alloc::vec![ObservedHousehold {
                roster_index: 0,
                replicate: 0,
                members,
                inclusion_case: 0,
                inclusion_day: end - 45,
                follow_up_days: [end - 42, end - 38, end - 30, end],
            }],
        }
    }

    #[test]
    fn lone_uninfected_member_survives_background_only() {
        let v = Variant::Omicron.config();
        let ds = dataset(alloc::vec![person(40.0, DetectionStatus::NotDetected, None, alloc::vec![(70, false)])], 100);
        let lik = HouseholdLikelihood::new(&ds, &v, LikelihoodConfig::default()).unwrap();
        let ll = lik.household_loglik(0, &HouseholdParams::neutral(0.7), &[]);
        assert!((ll + v.alpha * (100.0 - 30.0)).abs() < 1e-12);
    }

    #[test]
    fn penalty_is_quadratic_outside_window() {
        let v = Variant::Omicron.config();
        let ds = dataset(alloc::vec![person(40.0, DetectionStatus::Asymptomatic, None, alloc::vec![(50, false), (55, true)])], 100);
        let lik = HouseholdLikelihood::new(&ds, &v, LikelihoodConfig::default()).unwrap();
        let p = HouseholdParams::neutral(0.7);
        // window [50, 54]; tau in [50, 55) is free of penalty
        let inside = |t: f64| lik.household_loglik(0, &p, &[t]) + v.alpha * (t - 30.0);
        assert!((inside(50.2) - inside(54.9)).abs() < 1e-12);
        let base = inside(54.0 + 0.5);
        for &(t, viol) in &[(56.5, 1.5), (48.0, 2.0)] {
            assert!((inside(t) - base + 100.0 * viol * viol).abs() < 1e-9);
        }
        assert_eq!(lik.household_loglik(0, &p, &[29.0]), f64::NEG_INFINITY);
    }

    // Daily-step probability of an infection-day outcome in a two-person
    // household, enumerated directly from the synchronous daily model.
    fn daily_probability(days: [Option<i64>; 2], horizon: i64, p: &HouseholdParams, v: &VariantConfig, kernel: &KernelTable) -> f64 {
        let t0 = 30;
        let w = p.beta * size_weight(2, p.delta);
        let mut prob = 1.0;
        for i in 0..2 {
            let j = 1 - i;
            let last = days[i].unwrap_or(horizon - 1);
            for d in t0..=last {
                let mut lam = v.alpha;
                if let Some(aj) = days[j] {
                    if aj < d {
                        lam += w * kernel.at((d - aj) as u32);
                    }
                }
                let q = (-lam).exp();
                prob *= if Some(d) == days[i] { 1.0 - q } else { q };
            }
        }
        prob
    }

    #[test]
    fn cell_integrals_match_daily_enumeration() {
        let mut v = Variant::Omicron.config();
        v.alpha = 0.08;
        let kernel = KernelTable::new(&v);
        let p = HouseholdParams::neutral(1.5);
        let horizon = 33;
        let cfg = LikelihoodConfig { penalty: 0.0, observation_start: 30 };
        let outcomes = [None, Some(30), Some(31), Some(32)];
        let mut total = 0.0;
        for &a in &outcomes {
            for &b in &outcomes {
                let status = |o: Option<i64>| match o {
                    Some(d) => (DetectionStatus::Asymptomatic, alloc::vec![(d + 1, true)]),
                    None => (DetectionStatus::NotDetected, alloc::vec![(horizon, false)]),
                };
                let (sa, ta) = status(a);
                let (sb, tb) = status(b);
                let ds = dataset(alloc::vec![person(40.0, sa, None, ta), person(40.0, sb, None, tb)], horizon);
                let lik = HouseholdLikelihood::new(&ds, &v, cfg).unwrap();
                let asym_terms = v.asym_prob.ln() * (a.is_some() as u8 + b.is_some() as u8) as f64;
                // midpoint rule over the day cells of the infected members
                let n = 200;
                let cells: Vec<Option<i64>> = [a, b].into_iter().filter(|o| o.is_some()).collect();
                let mut integral = 0.0;
                let nodes = |d: i64| (0..n).map(move |k| d as f64 + (k as f64 + 0.5) / n as f64);
                match cells.as_slice() {
                    [] => integral = (lik.household_loglik(0, &p, &[])).exp(),
                    [Some(d)] => {
                        for t in nodes(*d) {
                            integral += (lik.household_loglik(0, &p, &[t]) - asym_terms).exp() / n as f64;
                        }
                    }
                    [Some(d1), Some(d2)] => {
                        for t1 in nodes(*d1) {
                            for t2 in nodes(*d2) {
                                integral += (lik.household_loglik(0, &p, &[t1, t2]) - asym_terms).exp() / (n * n) as f64;
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                let exact = daily_probability([a, b], horizon, &p, &v, &kernel);
                assert!((integral - exact).abs() <= 0.02 * exact, "{a:?} {b:?}: {integral} vs {exact}");
                total += exact;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symptomatic_onset_before_infection_is_impossible() {
        let v = Variant::Alpha.config();
        let ds = dataset(alloc::vec![person(40.0, DetectionStatus::Symptomatic, Some(52), alloc::vec![(53, true)])], 100);
        let lik = HouseholdLikelihood::new(&ds, &v, LikelihoodConfig::default()).unwrap();
        let p = HouseholdParams::neutral(0.7);
        assert!(lik.household_loglik(0, &p, &[48.5]).is_finite());
        assert_eq!(lik.household_loglik(0, &p, &[52.5 + 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn jacobian_makes_prior_proper_on_sampling_scale() {
        let post = HouseholdPosterior::new(
            HouseholdLikelihood::new(&dataset(alloc::vec![], 100), &Variant::Alpha.config(), LikelihoodConfig::default()).unwrap(),
            HouseholdPrior::default(),
        );
        // 1-D check along ln beta: integrate exp(ln_prior) with other coordinates at 0
        let mut u = alloc::vec![0.0; 11];
        let h = 0.01;
        let mut s = 0.0;
        let mut x = -8.0;
        while x < 4.0 {
            u[0] = x;
            s += post.ln_prior(&u).exp() * h;
            x += h;
        }
        u[0] = 0.0;
        let others = post.ln_prior(&u) - post.prior.beta.ln_pdf(1.0);
        assert!((s / others.exp() - 1.0).abs() < 1e-3);
    }
}
