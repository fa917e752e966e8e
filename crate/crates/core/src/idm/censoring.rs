//! Observation process: dementia is seen only at study visits, death is
//! recorded exactly up to the end of the epoch, healthy subjects may drop out.

use serde::{Deserialize, Serialize};

use super::{IdmRecord, Trajectory, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitConfig {
    pub mean_visit1: f64,
    pub mean_visit2: f64,
    pub var_visit1: f64,
    pub var_visit2: f64,
    pub dropout_prob: f64,
    pub epoch_length: f64,
    /// Boundary between the first and second visit windows.
    pub first_window: f64,
}

impl Default for VisitConfig {
    fn default() -> Self {
        Self {
            mean_visit1: 1.25 * DAYS_PER_YEAR,
            mean_visit2: 3.75 * DAYS_PER_YEAR,
            var_visit1: 100.0,
            var_visit2: 150.0,
            dropout_prob: 0.05,
            epoch_length: 5.0 * DAYS_PER_YEAR,
            first_window: 2.5 * DAYS_PER_YEAR,
        }
    }
}

impl VisitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.var_visit1 > 0.0
            && self.var_visit2 > 0.0
            && (0.0..=1.0).contains(&self.dropout_prob)
            && self.first_window > 0.0
            && self.epoch_length > self.first_window
            && (0.0..=self.first_window).contains(&self.mean_visit1)
            && (self.first_window..=self.epoch_length).contains(&self.mean_visit2);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "visit config: variances positive, dropout in [0, 1], means inside their windows".into(),
            ))
        }
    }
}

/// Visit times and the dropout draw for one subject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visits {
    pub visit1: f64,
    pub visit2: f64,
    pub dropout: bool,
}

/// Truncated normal visits in `[0, first_window]` and
/// `[first_window, epoch_length]`; the dropout draw is always consumed.
pub fn draw_visits(cfg: &VisitConfig, rng: &mut RngStream) -> Visits {
    let visit1 = rng.truncated_normal(cfg.mean_visit1, cfg.var_visit1.sqrt(), 0.0, cfg.first_window);
    let visit2 = rng.truncated_normal(cfg.mean_visit2, cfg.var_visit2.sqrt(), cfg.first_window, cfg.epoch_length);
    let dropout = rng.bernoulli(cfg.dropout_prob);
    Visits {
        visit1,
        visit2,
        dropout,
    }
}

/// Deterministic censoring of a latent trajectory given its visits.
///
/// * A dropout (healthy and alive at the first visit) censors both processes
///   at the first visit.
/// * Dementia is recorded at the first visit at or after onset that takes
///   place before death and before `end`.
/// * Undetected dementia is censored at the last visit attended before death
///   (0 if none). Healthy subjects alive at `end` are censored at `end`.
/// * Death is exact up to `end`, administratively censored at `end` after.
pub fn censor_with_visits(traj: &Trajectory, visits: &Visits, end: f64) -> IdmRecord {
    let death = traj.death;
    let onset = traj.onset.unwrap_or(f64::INFINITY);
    let (v1, v2) = (visits.visit1, visits.visit2);
    if visits.dropout && onset > v1 && death > v1 && v1 < end {
        return IdmRecord {
            illness_time: v1,
            illness_observed: false,
            death_time: v1,
            death_observed: false,
            visit1: v1,
            visit2: v2,
        };
    }
    let attended = |v: f64| v < death && v <= end;
    let detected = [v1, v2].into_iter().find(|&v| attended(v) && v >= onset);
    let (illness_time, illness_observed) = match detected {
        Some(v) => (v, true),
        None => {
            if onset > end && death > end {
                (end, false)
            } else {
                let last = [v1, v2].into_iter().filter(|&v| attended(v)).fold(0.0, f64::max);
                (last, false)
            }
        }
    };
    let (death_time, death_observed) = if death <= end { (death, true) } else { (end, false) };
    IdmRecord {
        illness_time,
        illness_observed,
        death_time,
        death_observed,
        visit1: v1,
        visit2: v2,
    }
}

/// Visits drawn from `cfg`, then [`censor_with_visits`].
pub fn apply_visit_censoring(traj: &Trajectory, cfg: &VisitConfig, rng: &mut RngStream) -> IdmRecord {
    let v = draw_visits(cfg, rng);
    censor_with_visits(traj, &v, cfg.epoch_length)
}

/// Only administrative censoring: onset is seen at its exact time.
pub fn censor_full_data(traj: &Trajectory, end: f64) -> IdmRecord {
    let death = traj.death;
    let (illness_time, illness_observed) = match traj.onset {
        Some(o) if o <= end && o < death => (o, true),
        _ => (death.min(end), false),
    };
    let (death_time, death_observed) = if death <= end { (death, true) } else { (end, false) };
    IdmRecord {
        illness_time,
        illness_observed,
        death_time,
        death_observed,
        visit1: f64::NAN,
        visit2: f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::{simulate_trajectory, IdmParams, IdmSubject};

    const END: f64 = 1826.25;

    fn visits(v1: f64, v2: f64) -> Visits {
        Visits { visit1: v1, visit2: v2, dropout: false }
    }

    #[test]
    fn death_before_first_visit_masks_dementia() {
        let tr = Trajectory { onset: Some(199.0), death: 200.0 };
        let r = censor_with_visits(&tr, &visits(450.0, 1370.0), END);
        assert!(!r.illness_observed);
        assert_eq!(r.illness_time, 0.0);
        assert!(r.death_observed);
        assert_eq!(r.death_time, 200.0);
    }

    #[test]
    fn onset_just_before_visit_is_detected_there() {
        let tr = Trajectory { onset: Some(449.9), death: 2500.0 };
        let r = censor_with_visits(&tr, &visits(450.0, 1370.0), END);
        assert!(r.illness_observed);
        assert_eq!(r.illness_time, 450.0);
        assert!(!r.death_observed);
        assert_eq!(r.death_time, END);
    }

    #[test]
    fn onset_after_last_visit_censored_there() {
        let tr = Trajectory { onset: Some(1500.0), death: 3000.0 };
        let r = censor_with_visits(&tr, &visits(450.0, 1370.0), END);
        assert!(!r.illness_observed);
        assert_eq!(r.illness_time, 1370.0);
        let healthy = Trajectory { onset: None, death: 3000.0 };
        let r = censor_with_visits(&healthy, &visits(450.0, 1370.0), END);
        assert_eq!((r.illness_time, r.illness_observed), (END, false));
        let died_healthy = Trajectory { onset: None, death: 900.0 };
        let r = censor_with_visits(&died_healthy, &visits(450.0, 1370.0), END);
        assert_eq!((r.illness_time, r.illness_observed), (450.0, false));
        assert_eq!((r.death_time, r.death_observed), (900.0, true));
    }

    #[test]
    fn dropout_censors_both_at_first_visit() {
        let tr = Trajectory { onset: Some(800.0), death: 1200.0 };
        let v = Visits { visit1: 450.0, visit2: 1370.0, dropout: true };
        let r = censor_with_visits(&tr, &v, END);
        assert_eq!((r.illness_time, r.death_time), (450.0, 450.0));
        assert!(!r.illness_observed && !r.death_observed);
        let sick = Trajectory { onset: Some(100.0), death: 1200.0 };
        let r = censor_with_visits(&sick, &v, END);
        assert!(r.illness_observed);
    }

    #[test]
    fn exact_visits_recover_trajectory() {
        let tr = Trajectory { onset: Some(321.5), death: 4000.0 };
        let r = censor_with_visits(&tr, &visits(321.5, 1000.0), f64::INFINITY);
        assert_eq!(r.illness_time, 321.5);
        assert!(r.illness_observed);
        assert_eq!((r.death_time, r.death_observed), (4000.0, true));
    }

    #[test]
    fn masked_fraction_matches_replay() {
        let p = IdmParams {
            scale: [4e-4, 6e-4, 2e-3],
            shape: [1.0, 1.0, 1.0],
            beta_sex: [0.0; 3],
            beta_age: [0.0; 3],
        };
        let cfg = VisitConfig::default();
        let s = IdmSubject { sex: 0, age: 0.0, epoch: 1 };
        let mut rng = RngStream::new(10, 0);
        let (mut masked, mut replay_masked, mut latent) = (0, 0, 0);
        for _ in 0..20_000 {
            let tr = simulate_trajectory(&p, &s, &mut rng);
            let v = draw_visits(&cfg, &mut rng);
            let r = censor_with_visits(&tr, &v, cfg.epoch_length);
            let Some(o) = tr.onset else { continue };
            if o > cfg.epoch_length {
                continue;
            }
            latent += 1;
            if !r.illness_observed {
                masked += 1;
            }
            // independent replay of the detection rule
            let dropped = v.dropout && o > v.visit1 && tr.death > v.visit1;
            let seen = !dropped
                && ((v.visit1 >= o && v.visit1 < tr.death) || (v.visit2 >= o && v.visit2 < tr.death && v.visit2 <= cfg.epoch_length));
            if !seen {
                replay_masked += 1;
            }
        }
        assert_eq!(masked, replay_masked);
        assert!(masked > 0 && masked < latent);
    }

    #[test]
    fn records_are_ordered_and_bounded() {
        let cfg = VisitConfig::default();
        let mut rng = RngStream::new(11, 0);
        for _ in 0..5000 {
            let d = 3000.0 * rng.uniform();
            let tr = Trajectory { onset: if rng.bernoulli(0.5) { Some(d * rng.uniform()) } else { None }, death: d };
            let r = apply_visit_censoring(&tr, &cfg, &mut rng);
            assert!(r.illness_time <= r.death_time);
            assert!(r.death_time <= cfg.epoch_length);
            assert!(r.visit1 <= cfg.first_window && r.visit2 >= cfg.first_window);
            let f = censor_full_data(&tr, cfg.epoch_length);
            assert!(f.illness_time <= f.death_time);
            if r.illness_observed {
                assert!(f.illness_observed);
            }
        }
        assert!(VisitConfig::default().validate().is_ok());
    }
}
