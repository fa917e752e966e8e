//! Within-household transmission by daily tau-leaping.

use alloc::vec::Vec;

use super::{AgeGroup, HouseholdParams, RosterMember, VariantConfig};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Member {
    pub age_years: f64,
    pub age_group: AgeGroup,
    pub protected: bool,
    /// Day of infection.
    pub tau: Option<u32>,
    pub symptomatic: bool,
    /// Day of symptom onset, `floor(tau + incubation)`.
    pub onset: Option<u32>,
}

impl Member {
    pub fn from_roster(r: &RosterMember) -> Self {
        Self {
            age_years: r.age_years,
            age_group: AgeGroup::from_years(r.age_years),
            protected: r.protected,
            tau: None,
            symptomatic: false,
            onset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HouseholdState {
    /// Next day to simulate.
    pub day: u32,
    pub members: Vec<Member>,
}

impl HouseholdState {
    pub fn new(roster: &[RosterMember]) -> Self {
        Self {
            day: 0,
            members: roster.iter().map(Member::from_roster).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn n_infected(&self) -> usize {
        self.members.iter().filter(|m| m.tau.is_some()).count()
    }
}

/// `w(n) = (n / 4)^(-delta)`.
pub fn size_weight(n: usize, delta: f64) -> f64 {
    if n == 4 {
        1.0
    } else {
        (n as f64 / 4.0).powf(-delta)
    }
}

/// `lambda_i(t) = alpha + beta w(n) sum_{j: tau_j < t} kappa(t - tau_j)
/// mu_inf(j) mu_sus(i) mu_pro(j, i)`.
pub fn infection_hazard(i: usize, t: f64, state: &HouseholdState, params: &HouseholdParams, variant: &VariantConfig) -> f64 {
    let target = &state.members[i];
    let mut pressure = 0.0;
    for (j, m) in state.members.iter().enumerate() {
        if j == i {
            continue;
        }
        if let Some(tau) = m.tau {
            let lag = t - tau as f64;
            if lag > 0.0 {
                pressure += variant.kernel.pdf(lag)
                    * params.infectivity(m.age_group, m.symptomatic)
                    * params.protection(m.protected, target.protected);
            }
        }
    }
    variant.alpha + params.beta * size_weight(state.size(), params.delta) * params.susceptibility(target.age_group) * pressure
}

/// Generation kernel evaluated at integer lags `0..=max_lag`, truncated where
/// the remaining mass falls below `1e-12`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub pdf: Vec<f64>,
}

impl KernelTable {
    pub fn new(variant: &VariantConfig) -> Self {
        let k = variant.kernel;
        let mut pdf = alloc::vec![0.0];
        let mut lag = 1u32;
        while 1.0 - k.cdf(lag as f64) > 1e-12 && lag < 1000 {
            pdf.push(k.pdf(lag as f64));
            lag += 1;
        }
        pdf.push(k.pdf(lag as f64));
        Self { pdf }
    }

    pub fn max_lag(&self) -> u32 {
        (self.pdf.len() - 1) as u32
    }

    pub fn at(&self, lag: u32) -> f64 {
        self.pdf.get(lag as usize).copied().unwrap_or(0.0)
    }
}

/// Infects member `i` on `day` and draws its symptom status and onset.
pub(crate) fn infect(m: &mut Member, day: u32, variant: &VariantConfig, rng: &mut RngStream) {
    m.tau = Some(day);
    m.symptomatic = !rng.bernoulli(variant.asym_prob);
    m.onset = if m.symptomatic {
        let inc = rng.gamma(variant.incubation);
        Some((day as f64 + inc).floor() as u32)
    } else {
        None
    };
}

/// Precomputed per-household transmission structure.
pub(crate) struct Dynamics<'a> {
    pub params: &'a HouseholdParams,
    pub variant: &'a VariantConfig,
    pub kernel: &'a KernelTable,
}

impl Dynamics<'_> {
    fn hazards(&self, state: &HouseholdState, t: u32) -> Vec<f64> {
        let w = self.params.beta * size_weight(state.size(), self.params.delta);
        state
            .members
            .iter()
            .map(|target| {
                if target.tau.is_some() {
                    return 0.0;
                }
                let mut pressure = 0.0;
                for m in &state.members {
                    if let Some(tau) = m.tau {
                        if tau < t {
                            pressure += self.kernel.at(t - tau)
                                * self.params.infectivity(m.age_group, m.symptomatic)
                                * self.params.protection(m.protected, target.protected);
                        }
                    }
                }
                self.variant.alpha + w * self.params.susceptibility(target.age_group) * pressure
            })
            .collect()
    }

    /// One synchronous day: hazards from the start-of-day state, then
    /// infections with probability `1 - exp(-lambda)`.
    pub fn step(&self, state: &mut HouseholdState, rng: &mut RngStream) {
        let t = state.day;
        let lambda = self.hazards(state, t);
        for (m, l) in state.members.iter_mut().zip(lambda) {
            if m.tau.is_none() && rng.bernoulli(1.0 - (-l).exp()) {
                infect(m, t, self.variant, rng);
            }
        }
        state.day += 1;
    }

    fn quiescent(&self, state: &HouseholdState) -> bool {
        state
            .members
            .iter()
            .filter_map(|m| m.tau)
            .all(|tau| state.day > tau + self.kernel.max_lag())
    }

    /// Simulates days `state.day..end`. While no infection is within the
    /// kernel's reach only the background hazard acts, and the next
    /// infection day is drawn directly from per-member geometric waiting
    /// times.
    pub fn run(&self, state: &mut HouseholdState, end: u32, rng: &mut RngStream) {
        let p_bg = 1.0 - (-self.variant.alpha).exp();
        while state.day < end {
            if state.members.iter().all(|m| m.tau.is_some()) {
                state.day = end;
                break;
            }
            if self.quiescent(state) {
                let waits: Vec<u64> = state
                    .members
                    .iter()
                    .map(|m| if m.tau.is_some() { u64::MAX } else { rng.geometric(p_bg) })
                    .collect();
                let first = waits.iter().copied().min().unwrap_or(u64::MAX);
                if first >= (end - state.day) as u64 {
                    state.day = end;
                    break;
                }
                let day = state.day + first as u32;
                for (m, &w) in state.members.iter_mut().zip(&waits) {
                    if w == first {
                        infect(m, day, self.variant, rng);
                    }
                }
                state.day = day + 1;
            } else {
                self.step(state, rng);
            }
        }
    }
}

/// One tau-leaping day with Δt = 1.
pub fn step_day(state: &mut HouseholdState, params: &HouseholdParams, variant: &VariantConfig, rng: &mut RngStream) {
    let kernel = KernelTable::new(variant);
    Dynamics {
        params,
        variant,
        kernel: &kernel,
    }
    .step(state, rng);
}

/// Transmission from day 0 to `end` (exclusive).
pub fn simulate_dynamics(
    roster: &[RosterMember],
    params: &HouseholdParams,
    variant: &VariantConfig,
    kernel: &KernelTable,
    end: u32,
    rng: &mut RngStream,
) -> HouseholdState {
    let mut state = HouseholdState::new(roster);
    Dynamics { params, variant, kernel }.run(&mut state, end, rng);
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn adult(protected: bool) -> RosterMember {
        RosterMember { age_years: 35.0, protected }
    }

    #[test]
    fn background_only_without_infectors() {
        let v = VariantConfig::alpha();
        let p = HouseholdParams::neutral(3.0);
        let s = HouseholdState::new(&[adult(false), adult(true), adult(false)]);
        for i in 0..3 {
            assert_eq!(infection_hazard(i, 10.0, &s, &p, &v), v.alpha);
        }
    }

    #[test]
    fn size_weight_identities() {
        for &d in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
            assert_eq!(size_weight(4, d), 1.0);
        }
        assert!(size_weight(2, 0.5) > size_weight(6, 0.5));
        assert!(size_weight(2, -0.5) < size_weight(6, -0.5));
        assert_eq!(size_weight(7, 0.0), 1.0);
    }

    #[test]
    fn hazard_at_kernel_mode() {
        let v = VariantConfig::alpha();
        let p = HouseholdParams { delta: 0.8, ..HouseholdParams::neutral(1.7) };
        let mut s = HouseholdState::new(&[adult(false), adult(false), adult(false)]);
        s.members[0].tau = Some(10);
        s.members[0].symptomatic = true;
        let mode = 1.0 / 0.44;
        let kmax = v.kernel.pdf(mode);
        let lam = infection_hazard(1, 10.0 + mode, &s, &p, &v);
        let expect = v.alpha + 1.7 * size_weight(3, 0.8) * kmax;
        assert!((lam - expect).abs() < 1e-15);
        assert!((kmax - 0.44 * 0.44 * mode * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_hazard_never_infects() {
        let mut v = VariantConfig::alpha();
        v.alpha = 0.0;
        let p = HouseholdParams::neutral(0.0);
        let kernel = KernelTable::new(&v);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..200 {
            let s = simulate_dynamics(&[adult(false); 5], &p, &v, &kernel, 200, &mut rng);
            assert_eq!(s.n_infected(), 0);
        }
    }

    #[test]
    fn constant_hazard_waiting_time_is_geometric() {
        let mut v = VariantConfig::alpha();
        v.alpha = 0.02;
        let p = HouseholdParams::neutral(0.0);
        let mut rng = RngStream::new(2, 0);
        let n = 20_000;
        let q = 1.0 - (-0.02f64).exp();
        let mut total = 0.0;
        for _ in 0..n {
            let mut s = HouseholdState::new(&[adult(false)]);
            while s.members[0].tau.is_none() {
                step_day(&mut s, &p, &v, &mut rng);
            }
            total += s.members[0].tau.unwrap() as f64;
        }
        let mean = total / n as f64;
        let expect = (1.0 - q) / q;
        let se = ((1.0 - q) / (q * q)).sqrt() / (n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");
    }

    #[test]
    fn fast_forward_matches_daily_stepping() {
        // Distribution of the first infection day under background hazard:
        // fast-forward versus plain daily steps.
        let mut v = VariantConfig::omicron();
        v.alpha = 0.01;
        let p = HouseholdParams::neutral(0.0);
        let kernel = KernelTable::new(&v);
        let roster = vec![adult(false); 3];
        let n = 20_000;
        let mut rng = RngStream::new(3, 0);
        let (mut ff, mut daily) = (0.0, 0.0);
        for _ in 0..n {
            let s = simulate_dynamics(&roster, &p, &v, &kernel, 100_000, &mut rng);
            ff += s.members.iter().filter_map(|m| m.tau).min().unwrap() as f64;
            let mut s = HouseholdState::new(&roster);
            while s.n_infected() == 0 {
                step_day(&mut s, &p, &v, &mut rng);
            }
            daily += s.members.iter().filter_map(|m| m.tau).min().unwrap() as f64;
        }
        let q = 1.0 - (-0.03f64).exp();
        let sd = ((1.0 - q) / (q * q)).sqrt();
        assert!((ff - daily).abs() / n as f64 <= 4.0 * sd * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn exchangeable_susceptibles() {
        let v = VariantConfig::alpha();
        let p = HouseholdParams::neutral(1.0);
        let kernel = KernelTable::new(&v);
        let mut rng = RngStream::new(4, 0);
        let n = 20_000;
        let mut hits = [0u32; 2];
        for _ in 0..n {
            let mut s = HouseholdState::new(&[adult(false); 3]);
            s.members[0].tau = Some(0);
            s.members[0].symptomatic = true;
            s.day = 1;
            Dynamics { params: &p, variant: &v, kernel: &kernel }.run(&mut s, 30, &mut rng);
            for k in 0..2 {
                hits[k] += s.members[k + 1].tau.is_some() as u32;
            }
        }
        let (a, b) = (hits[0] as f64 / n as f64, hits[1] as f64 / n as f64);
        let se = (a * (1.0 - a) * 2.0 / n as f64).sqrt();
        assert!((a - b).abs() < 3.5 * se, "{a} vs {b}");
    }

    #[test]
    fn attack_rate_nondecreasing_in_beta() {
        let v = VariantConfig::alpha();
        let kernel = KernelTable::new(&v);
        let roster = vec![adult(false), adult(true), RosterMember { age_years: 4.0, protected: false }, RosterMember { age_years: 9.0, protected: false }];
        let reps = 3000;
        let mut prev = -1.0;
        for &beta in &[0.2, 1.0, 3.0] {
            let p = HouseholdParams::neutral(beta);
            let mut total = 0usize;
            for r in 0..reps {
                let mut rng = RngStream::new(77, r);
                total += simulate_dynamics(&roster, &p, &v, &kernel, 200, &mut rng).n_infected();
            }
            let ar = total as f64 / (reps as f64 * 4.0);
            assert!(ar >= prev, "beta {beta}: {ar} < {prev}");
            prev = ar;
        }
    }
}
