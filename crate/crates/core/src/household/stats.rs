//! Summary statistics of observed household datasets.

use alloc::vec::Vec;

use super::study::StudyDataset;

/// Share of under-18s among the members who were first to test positive,
/// averaged over households with a positive test. Members testing positive
/// on the same first day share the household's credit equally.
pub fn first_positive_child_fraction(ds: &StudyDataset) -> f64 {
    let mut n = 0usize;
    let mut total = 0.0;
    for h in &ds.households {
        let Some(first) = h.members.iter().filter_map(|m| m.first_positive()).min() else {
            continue;
        };
        let tied: Vec<f64> = h
            .members
            .iter()
            .filter(|m| m.first_positive() == Some(first))
            .map(|m| m.age_years)
            .collect();
        n += 1;
        total += tied.iter().filter(|&&a| a < 18.0).count() as f64 / tied.len() as f64;
    }
    if n == 0 {
        f64::NAN
    } else {
        total / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::household::study::{select_study, simulate_pool, Scheme, StudyConfig};
    use crate::household::{HouseholdPrior, RosterConfig, Variant, VariantConfig};
    use crate::randkit::RngStream;

    #[test]
    fn child_selection_raises_child_first_positive_share() {
        let v = VariantConfig::alpha();
        let mut rc = RosterConfig::for_variant(Variant::Alpha);
        rc.n_rosters = 30;
        let r = rc.generate(&mut RngStream::new(1, 0)).unwrap();
        let cfg = StudyConfig { replicates: 20, ..StudyConfig::default() };
        let prior = HouseholdPrior::default();
        let (mut child, mut adult, mut n) = (0.0, 0.0, 0);
        for i in 0..20 {
            let mut rng = RngStream::new(2, i);
            let p = prior.sample(&mut rng);
            let Ok(pool) = simulate_pool(&r, &p, &v, &cfg, &rng.derive(0)) else { continue };
            let c = select_study(&pool, &v, Scheme::Child, &cfg, 40, &rng.derive(1));
            let a = select_study(&pool, &v, Scheme::Adult, &cfg, 40, &rng.derive(2));
            if let (Ok(c), Ok(a)) = (c, a) {
                child += first_positive_child_fraction(&c);
                adult += first_positive_child_fraction(&a);
                n += 1;
            }
        }
        assert!(n >= 10);
        assert!(child > adult, "{child} vs {adult}");
    }
}
