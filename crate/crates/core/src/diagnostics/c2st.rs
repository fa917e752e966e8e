//! Classifier two-sample test with cross-validated MLP classifiers and a
//! label-permutation p-value.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npe::model::Standardizer;
use crate::npe::nn::{AdamW, Mlp};
use crate::randkit::{logistic, RngStream};
#[allow(unused_imports)]
use crate::float::Float;

/// What one `a_k` in the statistic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum C2stUnit {
    /// Held-out accuracy of each fold.
    Fold,
    /// Held-out predicted probability of the true class of each sample.
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2stConfig {
    pub folds: usize,
    pub epochs: usize,
    /// Hidden width as a multiple of the input dimension.
    pub width_factor: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub permutations: usize,
    pub unit: C2stUnit,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            epochs: 100,
            width_factor: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            patience: 10,
            permutations: 10,
            unit: C2stUnit::Fold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2stResult {
    pub unit: C2stUnit,
    pub fold_accuracies: Vec<f64>,
    /// `a_k` for the chosen unit.
    pub scores: Vec<f64>,
    /// Mean held-out classification accuracy.
    pub accuracy: f64,
    pub t_obs: f64,
    pub permutation_t: Vec<f64>,
    pub p_value: f64,
    /// Fewer than 100 samples: accuracies are noisy.
    pub high_variance: bool,
}

/// `T = mean((a_k - 1/2)^2)`.
pub fn c2st_statistic(a: &[f64]) -> f64 {
    a.iter().map(|x| (x - 0.5) * (x - 0.5)).sum::<f64>() / a.len() as f64
}

/// `p = mean(1[T_b >= T_obs])`.
pub fn permutation_pvalue(t_obs: f64, t_perm: &[f64]) -> f64 {
    if t_perm.is_empty() {
        return 1.0;
    }
    t_perm.iter().filter(|&&t| t >= t_obs).count() as f64 / t_perm.len() as f64
}

struct Classifier {
    mlp: Mlp,
    weights: Vec<f64>,
    scale: Standardizer,
}

impl Classifier {
    fn logits(&self, xs: &[&[f64]]) -> Vec<f64> {
        let flat: Vec<f64> = xs.iter().flat_map(|x| self.scale.apply(x)).collect();
        self.mlp.forward(&self.weights, flat, xs.len(), None).output
    }
}

fn bce(xs: &[&[f64]], ys: &[f64], c: &Classifier) -> f64 {
    let z = c.logits(xs);
    z.iter()
        .zip(ys)
        .map(|(&z, &y)| z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z)
        .sum::<f64>()
        / ys.len().max(1) as f64
}

fn fit(xs: &[&[f64]], ys: &[f64], cfg: &C2stConfig, rng: &mut RngStream) -> Classifier {
    let d = xs[0].len();
    let w = (cfg.width_factor * d).max(8);
    let mut off = 0;
    let mlp = Mlp::new(&[d, w, w, 1], false, &mut off);
    let mut weights = alloc::vec![0.0; off];
    mlp.init(&mut weights, rng);
    let scale = Standardizer::fit(d, xs.iter().map(|x| (*x, 1.0)));
    let mut c = Classifier { mlp, weights, scale };
    let n_val = (xs.len() / 10).max(1).min(xs.len() - 1);
    let (vx, tx) = xs.split_at(n_val);
    let (vy, ty) = ys.split_at(n_val);
    let mut opt = AdamW::new(off, cfg.weight_decay);
    let mut best = (f64::INFINITY, c.weights.clone());
    let mut since = 0;
    let mut grad = alloc::vec![0.0; off];
    for _ in 0..cfg.epochs {
        let mut idx: Vec<usize> = (0..tx.len()).collect();
        rng.shuffle(&mut idx);
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| tx[i]).collect();
            let flat: Vec<f64> = bx.iter().flat_map(|x| c.scale.apply(x)).collect();
            let t = c.mlp.forward(&c.weights, flat, chunk.len(), None);
            let k = chunk.len() as f64;
            let dz: Vec<f64> = t.output.iter().zip(chunk).map(|(&z, &i)| (logistic(z) - ty[i]) / k).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            c.mlp.backward(&c.weights, &mut grad, &t, dz, None, false);
            opt.step(&mut c.weights, &grad, cfg.learning_rate);
        }
        let v = bce(vx, vy, &c);
        if v < best.0 {
            best = (v, c.weights.clone());
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
    }
    c.weights = best.1;
    c
}

/// Held-out fold accuracies and per-sample probabilities of the true class.
fn cross_validate(xs: &[&[f64]], ys: &[f64], cfg: &C2stConfig, rng: &RngStream) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.derive(0).shuffle(&mut order);
    let mut fold_acc = Vec::with_capacity(cfg.folds);
    let mut soft = alloc::vec![0.0; n];
    for f in 0..cfg.folds {
        let test: Vec<usize> = order.iter().copied().enumerate().filter(|(p, _)| p % cfg.folds == f).map(|(_, i)| i).collect();
        let train: Vec<usize> = order.iter().copied().enumerate().filter(|(p, _)| p % cfg.folds != f).map(|(_, i)| i).collect();
        let tx: Vec<&[f64]> = train.iter().map(|&i| xs[i]).collect();
        let ty: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
        let c = fit(&tx, &ty, cfg, &mut rng.derive(1 + f as u64));
        let ex: Vec<&[f64]> = test.iter().map(|&i| xs[i]).collect();
        let z = c.logits(&ex);
        let mut correct = 0;
        for (&i, &zi) in test.iter().zip(&z) {
            let p1 = logistic(zi);
            let p_true = if ys[i] == 1.0 { p1 } else { 1.0 - p1 };
            soft[i] = p_true;
            correct += (p_true > 0.5) as usize;
        }
        fold_acc.push(correct as f64 / test.len().max(1) as f64);
    }
    (fold_acc, soft)
}

/// Tests whether `class0` and `class1` (rows of equal dimension) come from
/// the same distribution. The permutation classifiers are retrained on
/// shuffled labels with streams `rng.derive(1000 + b)`.
pub fn c2st(class0: &[Vec<f64>], class1: &[Vec<f64>], cfg: &C2stConfig, rng: &RngStream) -> Result<C2stResult> {
    let n = class0.len() + class1.len();
    if class0.is_empty() || class1.is_empty() {
        return Err(Error::Precondition("both classes need samples".into()));
    }
    let minority = class0.len().min(class1.len()) as f64 / n as f64;
    if minority < 0.4 {
        return Err(Error::Precondition(alloc::format!(
            "class sizes {} and {} are more unbalanced than 60/40",
            class0.len(),
            class1.len()
        )));
    }
    let d = class0[0].len();
    if class0.iter().chain(class1).any(|x| x.len() != d) {
        return Err(Error::Precondition("all samples need the same dimension".into()));
    }
    if cfg.folds < 2 || n < 2 * cfg.folds {
        return Err(Error::Precondition("need at least two folds with two samples each".into()));
    }
    let xs: Vec<&[f64]> = class0.iter().chain(class1).map(|x| x.as_slice()).collect();
    let ys: Vec<f64> = (0..n).map(|i| (i >= class0.len()) as u8 as f64).collect();
    let pick = |fold: Vec<f64>, soft: Vec<f64>| match cfg.unit {
        C2stUnit::Fold => fold,
        C2stUnit::Pair => soft,
    };
    let (fold_acc, soft) = cross_validate(&xs, &ys, cfg, rng);
    let accuracy = fold_acc.iter().sum::<f64>() / fold_acc.len() as f64;
    let scores = pick(fold_acc.clone(), soft);
    let t_obs = c2st_statistic(&scores);
    let permutation_t: Vec<f64> = (0..cfg.permutations)
        .map(|b| {
            let r = rng.derive(1000 + b as u64);
            let mut yp = ys.clone();
            r.derive(0).shuffle(&mut yp);
            let (f, s) = cross_validate(&xs, &yp, cfg, &r.derive(1));
            c2st_statistic(&pick(f, s))
        })
        .collect();
    Ok(C2stResult {
        unit: cfg.unit,
        fold_accuracies: fold_acc,
        scores,
        accuracy,
        p_value: permutation_pvalue(t_obs, &permutation_t),
        t_obs,
        permutation_t,
        high_variance: n < 100,
    })
}
