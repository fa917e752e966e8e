//! Replicated household pools, study inclusion and observed datasets.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::dynamics::{simulate_dynamics, HouseholdState, KernelTable};
use super::testing::{is_positive, testing_process, TestSchedule};
use super::{AgeGroup, HouseholdParams, Roster, Variant, VariantConfig};
use crate::error::{Error, Result};
use crate::randkit::RngStream;

/// Household inclusion rule applied to the inclusion case.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Random,
    Child,
    Adult,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Random, Scheme::Child, Scheme::Adult];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Random => "random",
            Scheme::Child => "child",
            Scheme::Adult => "adult",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn from_code(c: usize) -> Option<Self> {
        Self::ALL.get(c).copied()
    }

    /// Children are under 18 years, adults 18 and older.
    pub fn admits(self, age_years: f64) -> bool {
        match self {
            Scheme::Random => true,
            Scheme::Child => age_years < 18.0,
            Scheme::Adult => age_years >= 18.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Inclusion cases need a positive test on or before this day.
    pub horizon: u32,
    /// Transmission and testing are simulated on days `0..=dynamics_days`.
    pub dynamics_days: u32,
    pub date_shift: i64,
    pub follow_up: [u32; 4],
    pub replicates: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            horizon: 120,
            dynamics_days: 200,
            date_shift: 30,
            follow_up: [3, 7, 15, 45],
            replicates: 50,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.horizon > self.dynamics_days || self.follow_up.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "study needs replicates > 0, horizon <= dynamics_days and increasing follow-up days".into(),
            ));
        }
        Ok(())
    }

    pub fn follow_up_span(&self) -> u32 {
        self.follow_up[3]
    }
}

/// One simulated household before any selection.
#[derive(Clone, Debug, PartialEq)]
pub struct RawHousehold {
    pub roster_index: usize,
    pub replicate: usize,
    pub state: HouseholdState,
    pub tests: TestSchedule,
}

/// Every roster replicated `cfg.replicates` times; replicate `j` of roster
/// `r` uses stream `rng.derive(r * replicates + j)`.
pub fn simulate_pool(
    rosters: &[Roster],
    params: &HouseholdParams,
    variant: &VariantConfig,
    cfg: &StudyConfig,
    rng: &RngStream,
) -> Result<Vec<RawHousehold>> {
    params.validate()?;
    cfg.validate()?;
    let kernel = KernelTable::new(variant);
    let mut pool = Vec::with_capacity(rosters.len() * cfg.replicates);
    for (r, roster) in rosters.iter().enumerate() {
        variant.miss_probability(roster.len())?;
        for j in 0..cfg.replicates {
            let mut s = rng.derive((r * cfg.replicates + j) as u64);
            let state = simulate_dynamics(roster, params, variant, &kernel, cfg.dynamics_days + 1, &mut s);
            let tests = testing_process(&state, variant, cfg.dynamics_days, &mut s)?;
            pool.push(RawHousehold {
                roster_index: r,
                replicate: j,
                state,
                tests,
            });
        }
    }
    Ok(pool)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionStatus {
    NotDetected,
    Symptomatic,
    Asymptomatic,
}

impl DetectionStatus {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Self::NotDetected, Self::Symptomatic, Self::Asymptomatic].get(c as usize).copied()
    }
}

/// A person as seen by the study. Dates are shifted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedPerson {
    pub age_years: f64,
    pub age_group: AgeGroup,
    pub protected: bool,
    pub status: DetectionStatus,
    /// Reported symptom onset of a detected symptomatic case.
    pub onset: Option<i64>,
    /// `(day, positive)` for every test up to the end of follow-up.
    pub tests: Vec<(i64, bool)>,
    /// Simulated infection day and symptom status, kept for validation.
    pub true_infection: Option<i64>,
    pub true_symptomatic: bool,
}

impl ObservedPerson {
    pub fn first_positive(&self) -> Option<i64> {
        self.tests.iter().find(|t| t.1).map(|t| t.0)
    }

    pub fn last_positive(&self) -> Option<i64> {
        self.tests.iter().rev().find(|t| t.1).map(|t| t.0)
    }

    /// Last negative test before the first positive (or overall when never
    /// positive).
    pub fn last_negative(&self) -> Option<i64> {
        let fp = self.first_positive().unwrap_or(i64::MAX);
        self.tests.iter().rev().find(|t| !t.1 && t.0 < fp).map(|t| t.0)
    }

    /// Symptom onset for symptomatic cases, first positive test otherwise.
    pub fn onset_or_first_positive(&self) -> Option<i64> {
        self.onset.or(self.first_positive())
    }

    pub fn detected(&self) -> bool {
        self.status != DetectionStatus::NotDetected
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedHousehold {
    pub roster_index: usize,
    pub replicate: usize,
    pub members: Vec<ObservedPerson>,
    pub inclusion_case: usize,
    pub inclusion_day: i64,
    pub follow_up_days: [i64; 4],
}

impl ObservedHousehold {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn follow_up_end(&self) -> i64 {
        self.follow_up_days[3]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyDataset {
    pub variant: Variant,
    pub scheme: Scheme,
    pub households: Vec<ObservedHousehold>,
}

/// Inclusion of a raw household under `scheme`, or `None` when no case is
/// eligible. One case is drawn uniformly among members admitted by the
/// scheme with a positive test by the horizon; the inclusion date is its
/// symptom onset (first positive test if asymptomatic) plus a Poisson delay
/// and must not precede its first positive test.
pub fn include_household(
    raw: &RawHousehold,
    variant: &VariantConfig,
    scheme: Scheme,
    cfg: &StudyConfig,
    rng: &mut RngStream,
) -> Option<ObservedHousehold> {
    let st = &raw.state;
    let candidates: Vec<(usize, u32)> = (0..st.size())
        .filter(|&i| scheme.admits(st.members[i].age_years))
        .filter_map(|i| raw.tests.first_positive(st, i, cfg.horizon).map(|fp| (i, fp)))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let (k, first_pos) = candidates[rng.below(candidates.len())];
    let delay = rng.poisson(variant.inclusion_delay_mean) as u32;
    let anchor = st.members[k].onset.unwrap_or(first_pos);
    let inclusion = anchor + delay;
    let end = inclusion + cfg.follow_up_span();
    if inclusion < first_pos || end > cfg.dynamics_days {
        return None;
    }
    Some(observe(raw, k, inclusion, cfg))
}

fn observe(raw: &RawHousehold, k: usize, inclusion: u32, cfg: &StudyConfig) -> ObservedHousehold {
    let shift = cfg.date_shift;
    let follow_up = cfg.follow_up.map(|d| inclusion + d);
    let end = follow_up[3];
    let members = raw
        .state
        .members
        .iter()
        .zip(&raw.tests.days)
        .map(|(m, days)| {
            let mut all: Vec<u32> = days.iter().copied().filter(|&d| d <= end).collect();
            all.extend_from_slice(&follow_up);
            all.sort_unstable();
            all.dedup();
            let tests: Vec<(i64, bool)> = all.iter().map(|&d| (d as i64 + shift, is_positive(m.tau, d))).collect();
            let positive = tests.iter().any(|t| t.1);
            let onset = m.onset.filter(|&d| positive && d <= end);
            let status = match (positive, onset.is_some()) {
                (false, _) => DetectionStatus::NotDetected,
                (true, true) => DetectionStatus::Symptomatic,
                (true, false) => DetectionStatus::Asymptomatic,
            };
            ObservedPerson {
                age_years: m.age_years,
                age_group: m.age_group,
                protected: m.protected,
                status,
                onset: onset.map(|d| d as i64 + shift),
                tests,
                true_infection: m.tau.map(|t| t as i64 + shift),
                true_symptomatic: m.symptomatic,
            }
        })
        .collect();
    ObservedHousehold {
        roster_index: raw.roster_index,
        replicate: raw.replicate,
        members,
        inclusion_case: k,
        inclusion_day: inclusion as i64 + shift,
        follow_up_days: follow_up.map(|d| d as i64 + shift),
    }
}

/// Applies `scheme` to the pool and samples `n` eligible households
/// uniformly without replacement. Household `h` draws its inclusion case
/// from `rng.derive(h)`; the final sample uses `rng.derive(u64::MAX)`.
pub fn select_study(
    pool: &[RawHousehold],
    variant: &VariantConfig,
    scheme: Scheme,
    cfg: &StudyConfig,
    n: usize,
    rng: &RngStream,
) -> Result<StudyDataset> {
    let mut eligible: Vec<ObservedHousehold> = pool
        .iter()
        .enumerate()
        .filter_map(|(h, raw)| include_household(raw, variant, scheme, cfg, &mut rng.derive(h as u64)))
        .collect();
    if eligible.len() < n {
        return Err(Error::InsufficientSample {
            needed: n,
            available: eligible.len(),
        });
    }
    let mut s = rng.derive(u64::MAX);
    for i in 0..n {
        let j = i + s.below(eligible.len() - i);
        eligible.swap(i, j);
    }
    eligible.truncate(n);
    Ok(StudyDataset {
        variant: variant.variant,
        scheme,
        households: eligible,
    })
}

/// Pool from `rng.derive(0)`, selection from `rng.derive(1 + scheme)`.
pub fn simulate_study(
    rosters: &[Roster],
    params: &HouseholdParams,
    variant: &VariantConfig,
    scheme: Scheme,
    cfg: &StudyConfig,
    n: usize,
    rng: &RngStream,
) -> Result<StudyDataset> {
    let pool = simulate_pool(rosters, params, variant, cfg, &rng.derive(0))?;
    select_study(&pool, variant, scheme, cfg, n, &rng.derive(1 + scheme.code() as u64))
}
