//! The joint simulator abstraction shared by training, calibration and the
//! classifier test.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::npe::set::EncodedSet;
use crate::randkit::RngStream;
use crate::transform::ParamTransform;

/// Draws `(theta, data)` from prior x forward model x selection mechanism.
///
/// `condition` indexes a discrete simulation setting the estimator is
/// conditioned on (study epoch, inclusion scheme, ...).
pub trait JointSimulator {
    type Obs;

    fn param_names(&self) -> Vec<String>;
    fn transform(&self) -> ParamTransform;
    fn n_conditions(&self) -> usize;
    fn row_dim(&self) -> usize;
    fn condition_dim(&self) -> usize;

    fn draw(&self, condition: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Self::Obs)>;

    fn encode(&self, obs: &Self::Obs) -> Result<EncodedSet>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }
}

/// A simulated training pair in natural parameter space.
#[derive(Clone, Debug)]
pub struct Pair {
    pub theta: Vec<f64>,
    pub data: EncodedSet,
    pub condition: usize,
}

/// `n` pairs; pair `i` uses stream `rng.derive(i)` and condition
/// `i % n_conditions` (or `fixed_condition`). Failed draws are skipped and
/// counted.
pub fn simulate_pairs<S: JointSimulator>(
    sim: &S,
    n: usize,
    fixed_condition: Option<usize>,
    rng: &RngStream,
) -> (Vec<Pair>, usize) {
    let mut out = Vec::with_capacity(n);
    let mut failures = 0;
    for i in 0..n {
        let mut r = rng.derive(i as u64);
        let condition = fixed_condition.unwrap_or(i % sim.n_conditions().max(1));
        match sim.draw(condition, &mut r).and_then(|(theta, obs)| Ok((theta, sim.encode(&obs)?))) {
            Ok((theta, data)) => out.push(Pair { theta, data, condition }),
            Err(_) => failures += 1,
        }
    }
    (out, failures)
}
