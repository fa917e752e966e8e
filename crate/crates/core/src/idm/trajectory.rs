//! Latent event histories by inverse-transform sampling.

use super::{IdmParams, IdmSubject, Transition};
use crate::randkit::RngStream;
#[allow(unused_imports)]
use crate::float::Float;

/// Latent history: dementia onset (if before death) and death time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub onset: Option<f64>,
    pub death: f64,
}

impl Trajectory {
    pub fn ill_before(&self, t: f64) -> bool {
        self.onset.is_some_and(|o| o <= t)
    }
}

/// Inverse of `S(t) = exp(-a' t^kappa)` at `exp(-e)`: `(e / a')^(1/kappa)`.
fn weibull_time(e: f64, rate: f64, kappa: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    (e / rate).powf(1.0 / kappa)
}

/// Competing onset/death times from state 0; after onset, death is drawn
/// from the 1->2 Weibull on study time conditional on survival past onset,
/// `T12 = (T01^kappa + E / a')^(1/kappa)`.
pub fn simulate_trajectory(params: &IdmParams, subject: &IdmSubject, rng: &mut RngStream) -> Trajectory {
    let e01 = rng.exp1();
    let e02 = rng.exp1();
    let e12 = rng.exp1();
    let t01 = weibull_time(e01, params.scale[0] * params.risk(Transition::HealthyToIll, subject), params.shape[0]);
    let t02 = weibull_time(e02, params.scale[1] * params.risk(Transition::HealthyToDead, subject), params.shape[1]);
    if t01 < t02 {
        let rate = params.scale[2] * params.risk(Transition::IllToDead, subject);
        let k = params.shape[2];
        let death = if rate <= 0.0 { f64::INFINITY } else { (t01.powf(k) + e12 / rate).powf(1.0 / k) };
        Trajectory {
            onset: Some(t01),
            death,
        }
    } else {
        Trajectory {
            onset: None,
            death: t02,
        }
    }
}
