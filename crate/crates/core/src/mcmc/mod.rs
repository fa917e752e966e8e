//! Likelihood-based household baseline: adaptive random-walk Metropolis with
//! block updates and chain diagnostics.

pub mod diagnostics;
pub mod likelihood;
pub mod sampler;

pub use diagnostics::{chain_diagnostics, ess, split_rhat, ChainDiagnostics};
pub use likelihood::{HouseholdLikelihood, HouseholdPosterior, LikelihoodConfig};
pub use sampler::{metropolis_sample, run_chains, Chain, McmcConfig, ProposalRecord, Target};
