//! Minibatch training of the posterior estimator by negative log-likelihood.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::model::{NpeArch, PosteriorModel, Prepared, Standardizer};
use super::nn::{cosine_lr, AdamW};
use crate::error::{Error, Result};
use crate::randkit::RngStream;
use crate::sim::Pair;
use crate::transform::ParamTransform;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            validation_fraction: 0.1,
            patience: Some(20),
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("learning rate must be positive and batch size at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("validation fraction must lie in [0, 1) and weight decay be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Running minimum of the validation loss.
    pub smoothed_val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub steps: usize,
}

/// Prepared inputs and standardised targets.
pub type Batch = Vec<(Prepared, Vec<f64>)>;

pub fn prepare_pairs(model: &PosteriorModel, pairs: &[&Pair]) -> Result<Batch> {
    pairs
        .iter()
        .map(|p| Ok((model.prepare(&p.data)?, model.standardize_theta(&p.theta)?)))
        .collect()
}

/// Mean loss over `batch` without dropout.
pub fn mean_loss(model: &PosteriorModel, batch: &Batch) -> f64 {
    let s: f64 = batch.iter().map(|(x, z)| model.pair_loss(x, z, None, None)).sum();
    s / batch.len() as f64
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Joint training of encoder and head. Pairs are split into training and
/// validation sets with `rng.derive(0)`; the weights are initialised from
/// `rng.derive(1)`, minibatch order uses `rng.derive(2)` and dropout
/// `rng.derive(3)`. With a validation set the best-validation weights are
/// returned.
/// Untrained model with standardisation constants fitted to `pairs`.
pub fn initial_model(
    pairs: &[&Pair],
    arch: NpeArch,
    param_names: Vec<String>,
    transform: ParamTransform,
    rng: &mut RngStream,
) -> Result<PosteriorModel> {
    let thetas: Vec<Vec<f64>> = pairs.iter().map(|p| transform.forward(&p.theta)).collect::<Result<_>>()?;
    let theta_scale = Standardizer::fit(arch.n_params, thetas.iter().map(|t| (t.as_slice(), 1.0)));
    let row_scale = {
        let canon: Vec<_> = pairs.iter().map(|p| p.data.canonical()).collect();
        Standardizer::fit(
            arch.row_dim,
            canon.iter().flat_map(|c| (0..c.n_rows()).map(move |i| (c.row(i), c.weights[i]))),
        )
    };
    PosteriorModel::init(arch, param_names, transform, row_scale, theta_scale, rng)
}

pub fn train(
    pairs: &[Pair],
    arch: NpeArch,
    param_names: Vec<String>,
    transform: ParamTransform,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<(PosteriorModel, TrainReport)> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.derive(0).shuffle(&mut order);
    let n_val = if cfg.validation_fraction > 0.0 {
        ((pairs.len() as f64 * cfg.validation_fraction).round() as usize).max(1)
    } else {
        0
    };
    let n_train = pairs.len().saturating_sub(n_val);
    if n_train < 2 * cfg.batch_size.min(n_train.max(1)) || n_train < 2 {
        return Err(Error::Precondition(alloc::format!(
            "{n_train} training pairs do not fill two batches of {}",
            cfg.batch_size
        )));
    }
    let train_refs: Vec<&Pair> = order[n_val..].iter().map(|&i| &pairs[i]).collect();
    let val_refs: Vec<&Pair> = order[..n_val].iter().map(|&i| &pairs[i]).collect();

    let mut model = initial_model(&train_refs, arch, param_names, transform, &mut rng.derive(1))?;
    let train_set = prepare_pairs(&model, &train_refs)?;
    let val_set = prepare_pairs(&model, &val_refs)?;

    let batch = cfg.batch_size.min(n_train);
    let per_epoch = n_train.div_ceil(batch);
    let total = per_epoch * cfg.epochs;
    let mut opt = AdamW::new(model.n_weights(), cfg.weight_decay);
    let mut report = TrainReport {
        n_train,
        n_val,
        ..Default::default()
    };
    let mut best = (f64::INFINITY, model.weights.clone());
    let mut dropout_rng = rng.derive(3);
    let mut since_best = 0;
    let mut grad = alloc::vec![0.0; model.n_weights()];
    for epoch in 0..cfg.epochs {
        let mut idx: Vec<usize> = (0..n_train).collect();
        rng.derive(2).derive(epoch as u64).shuffle(&mut idx);
        let mut epoch_loss = 0.0;
        for (b, chunk) in idx.chunks(batch).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in chunk {
                let (x, z) = &train_set[i];
                loss += model.pair_loss(x, z, Some(&mut dropout_rng), Some(&mut grad));
            }
            let k = chunk.len() as f64;
            loss /= k;
            grad.iter_mut().for_each(|g| *g /= k);
            let gn = norm(&grad);
            if !loss.is_finite() || !gn.is_finite() {
                return Err(Error::Numeric(alloc::format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}; weight norm {:.4e}, target norm {:.4e}",
                    norm(&model.weights),
                    chunk.iter().map(|&i| norm(&train_set[i].1)).fold(0.0, f64::max)
                )));
            }
            if let Some(c) = cfg.grad_clip {
                if gn > c {
                    grad.iter_mut().for_each(|g| *g *= c / gn);
                }
            }
            opt.step(&mut model.weights, &grad, cosine_lr(cfg.learning_rate, report.steps, total));
            report.steps += 1;
            epoch_loss += loss * k;
        }
        report.train_loss.push(epoch_loss / n_train as f64);
        let v = if val_set.is_empty() {
            *report.train_loss.last().unwrap()
        } else {
            mean_loss(&model, &val_set)
        };
        report.val_loss.push(v);
        let prev = report.smoothed_val_loss.last().copied().unwrap_or(f64::INFINITY);
        report.smoothed_val_loss.push(prev.min(v));
        if v < best.0 {
            best = (v, model.weights.clone());
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                report.stopped_early = true;
                break;
            }
        }
    }
    if !val_set.is_empty() && report.best_epoch.is_some() {
        model.weights = best.1;
    }
    Ok((model, report))
}
