//! `f64` math for `no_std` builds, backed by libm. With std linked (tests)
//! the inherent methods take precedence and this trait goes unused.

#[allow(dead_code)]
pub trait Float: Sized {
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn log10(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn floor(self) -> Self;
    fn round(self) -> Self;
    fn cos(self) -> Self;
}

impl Float for f64 {
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    fn ln(self) -> f64 {
        libm::log(self)
    }
    fn ln_1p(self) -> f64 {
        libm::log1p(self)
    }
    fn log10(self) -> f64 {
        libm::log10(self)
    }
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
    fn powi(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    fn round(self) -> f64 {
        libm::round(self)
    }
    fn cos(self) -> f64 {
        libm::cos(self)
    }
}
