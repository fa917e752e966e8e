//! Bijections between natural parameter space and the unconstrained space the
//! posterior network works in.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::randkit::{logistic, logit};
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bijection {
    Identity,
    Log,
    Logit,
}

impl Bijection {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Bijection::Identity => x,
            Bijection::Log => x.ln(),
            Bijection::Logit => logit(x),
        }
    }

    pub fn inverse(self, u: f64) -> f64 {
        match self {
            Bijection::Identity => u,
            Bijection::Log => u.exp(),
            Bijection::Logit => logistic(u),
        }
    }

    /// `log |d forward / dx|` at natural-space `x`.
    pub fn ln_abs_jacobian(self, x: f64) -> f64 {
        match self {
            Bijection::Identity => 0.0,
            Bijection::Log => -x.ln(),
            Bijection::Logit => -(x.ln() + (1.0 - x).ln()),
        }
    }

    pub fn in_domain(self, x: f64) -> bool {
        match self {
            Bijection::Identity => x.is_finite(),
            Bijection::Log => x > 0.0 && x.is_finite(),
            Bijection::Logit => x > 0.0 && x < 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Bijection::Identity => 0,
            Bijection::Log => 1,
            Bijection::Logit => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Bijection::Identity),
            1 => Some(Bijection::Log),
            2 => Some(Bijection::Logit),
            _ => None,
        }
    }
}

/// Per-parameter bijections.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTransform {
    pub maps: Vec<Bijection>,
}

impl ParamTransform {
    pub fn new(maps: Vec<Bijection>) -> Self {
        Self { maps }
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    pub fn forward(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.maps.len() {
            return Err(domain!("expected {} parameters, got {}", self.maps.len(), theta.len()));
        }
        theta
            .iter()
            .zip(&self.maps)
            .map(|(&x, b)| {
                if b.in_domain(x) {
                    Ok(b.forward(x))
                } else {
                    Err(domain!("parameter value {x} outside the domain of {b:?}"))
                }
            })
            .collect()
    }

    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.maps).map(|(&x, b)| b.inverse(x)).collect()
    }

    pub fn ln_abs_jacobian(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.maps).map(|(&x, b)| b.ln_abs_jacobian(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn inverse_after_forward_is_identity(p in 1e-6f64..0.999_999, s in 1e-6f64..1e6, x in -1e3f64..1e3) {
            let t = ParamTransform::new(vec![Bijection::Logit, Bijection::Log, Bijection::Identity]);
            let back = t.inverse(&t.forward(&[p, s, x]).unwrap());
            prop_assert!((back[0] - p).abs() <= 1e-10 * p.max(1e-3));
            prop_assert!((back[1] - s).abs() <= 1e-10 * s);
            prop_assert!((back[2] - x).abs() <= 1e-10);
        }
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let t = ParamTransform::new(vec![Bijection::Logit]);
        assert!(t.forward(&[1.0]).is_err());
        assert!(t.forward(&[0.0, 1.0]).is_err());
    }
}
