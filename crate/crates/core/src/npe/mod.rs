//! Amortized neural posterior estimation: permutation-invariant encoder,
//! Gaussian mixture head, training and gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod mixture;
pub mod model;
pub mod nn;
pub mod set;
pub mod train;

pub use gradcheck::{grad_check, GradCheck};
pub use mixture::Mixture;
pub use model::{NpeArch, Posterior, PosteriorModel, PosteriorSamples, Standardizer};
pub use set::EncodedSet;
pub use train::{initial_model, prepare_pairs, train, Batch, TrainConfig, TrainReport};
