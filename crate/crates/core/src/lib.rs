//! Simulation-based inference under selection bias.
//!
//! Forward simulators that embed the selection mechanism (biased sampling
//! with missing outcomes, visit-based censoring, outcome-dependent household
//! inclusion), an amortized neural posterior estimator trained on the
//! selected data, calibration and two-sample diagnostics, and a
//! likelihood-based MCMC baseline for the household model.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub(crate) mod float;
pub mod household;
pub mod mcmc;
pub mod idm;
pub mod npe;
pub mod prevalence;
pub mod randkit;
pub mod selection;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
pub use randkit::RngStream;
