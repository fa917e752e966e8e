//! Symptomatic, triggered and background testing.

use alloc::vec::Vec;

use super::dynamics::HouseholdState;
use super::VariantConfig;
use crate::error::Result;
use crate::randkit::RngStream;

/// A test is positive from 1 to 15 days after infection.
pub const POSITIVE_FROM: u32 = 1;
pub const POSITIVE_TO: u32 = 15;

pub fn is_positive(tau: Option<u32>, day: u32) -> bool {
    tau.is_some_and(|t| day >= t + POSITIVE_FROM && day <= t + POSITIVE_TO)
}

/// Test days per member, sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TestSchedule {
    pub days: Vec<Vec<u32>>,
}

impl TestSchedule {
    pub fn first_positive(&self, state: &HouseholdState, i: usize, until: u32) -> Option<u32> {
        let tau = state.members[i].tau;
        self.days[i].iter().copied().take_while(|&d| d <= until).find(|&d| is_positive(tau, d))
    }
}

/// Raw tests on days `0..=end`.
///
/// Every member is tested in the background with a fixed daily
/// probability. A symptomatic member is tested after onset with a geometric
/// delay; if that test is positive, each other member is tested after a
/// geometric delay unless missed with the size-specific probability.
pub fn testing_process(state: &HouseholdState, variant: &VariantConfig, end: u32, rng: &mut RngStream) -> Result<TestSchedule> {
    let n = state.size();
    let miss = variant.miss_probability(n)?;
    let mut days: Vec<Vec<u32>> = alloc::vec![Vec::new(); n];
    let p_bg = variant.background_test_prob;
    for d in days.iter_mut() {
        let mut t = rng.geometric(p_bg);
        while t <= end as u64 {
            d.push(t as u32);
            t += 1 + rng.geometric(p_bg);
        }
    }
    let mut triggers = Vec::new();
    for (i, m) in state.members.iter().enumerate() {
        if let Some(onset) = m.onset {
            let t = onset as u64 + rng.geometric(variant.symptom_test_p);
            if t <= end as u64 {
                days[i].push(t as u32);
                if is_positive(m.tau, t as u32) {
                    triggers.push((i, t as u32));
                }
            }
        }
    }
    if let Some(&(source, day)) = triggers.iter().min_by_key(|&&(_, d)| d) {
        for (k, d) in days.iter_mut().enumerate() {
            if k == source || rng.bernoulli(miss) {
                continue;
            }
            let t = day as u64 + rng.geometric(variant.trigger_test_p);
            if t <= end as u64 {
                d.push(t as u32);
            }
        }
    }
    for d in days.iter_mut() {
        d.sort_unstable();
        d.dedup();
    }
    Ok(TestSchedule { days })
}
