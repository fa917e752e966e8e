//! Deep-set summary encoder and mixture density head.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::mixture::{nll_and_grad, raw_len, Mixture};
use super::nn::{Mlp, MlpTrace};
use super::set::EncodedSet;
use crate::error::{Error, Result};
use crate::randkit::special::norm_ppf;
use crate::randkit::RngStream;
use crate::transform::ParamTransform;
#[allow(unused_imports)]
use crate::float::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpeArch {
    pub row_dim: usize,
    pub cond_dim: usize,
    pub n_params: usize,
    /// Width of the per-row and per-group networks.
    pub enc_width: usize,
    pub summary_dim: usize,
    /// Rows are pooled within groups first, then over groups.
    pub grouped: bool,
    pub head_width: usize,
    pub n_components: usize,
    pub dropout: f64,
}

impl NpeArch {
    pub fn new(row_dim: usize, cond_dim: usize, n_params: usize, summary_dim: usize, head_width: usize, grouped: bool) -> Self {
        Self {
            row_dim,
            cond_dim,
            n_params,
            enc_width: 64,
            summary_dim,
            grouped,
            head_width,
            n_components: 10,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.row_dim, self.n_params, self.enc_width, self.summary_dim, self.head_width, self.n_components];
        if dims.contains(&0) {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Layer layout over the flat weight buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub phi: Mlp,
    pub psi: Option<Mlp>,
    pub rho: Mlp,
    pub head: Mlp,
    pub n_weights: usize,
}

impl Network {
    pub fn new(a: &NpeArch) -> Self {
        let h = a.enc_width;
        let mut off = 0;
        let phi = Mlp::new(&[a.row_dim, h, h], true, &mut off);
        let psi = a.grouped.then(|| Mlp::new(&[h, h, h], true, &mut off));
        let rho = Mlp::new(&[h, h, a.summary_dim], false, &mut off);
        let head = Mlp::new(
            &[a.summary_dim + a.cond_dim, a.head_width, a.head_width, raw_len(a.n_components, a.n_params)],
            false,
            &mut off,
        );
        Self {
            phi,
            psi,
            rho,
            head,
            n_weights: off,
        }
    }
}

/// Columnwise affine standardisation `(x - mean) / sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; d],
            sd: alloc::vec![1.0; d],
        }
    }

    /// Weighted column moments; constant columns keep unit scale.
    pub fn fit<'a>(d: usize, rows: impl Iterator<Item = (&'a [f64], f64)>) -> Self {
        let (mut s0, mut s1, mut s2) = (0.0, alloc::vec![0.0; d], alloc::vec![0.0; d]);
        for (r, w) in rows {
            s0 += w;
            for j in 0..d {
                s1[j] += w * r[j];
                s2[j] += w * r[j] * r[j];
            }
        }
        if s0 <= 0.0 {
            return Self::identity(d);
        }
        let mean: Vec<f64> = s1.iter().map(|s| s / s0).collect();
        let sd = (0..d)
            .map(|j| {
                let v = (s2[j] / s0 - mean[j] * mean[j]).max(0.0);
                if v > 1e-12 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, sd }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.sd)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.mean.iter().zip(&self.sd)).map(|(v, (m, s))| m + s * v).collect()
    }
}

/// A set after canonicalisation and row standardisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub rows: Vec<f64>,
    pub weights: Vec<f64>,
    pub groups: Vec<(usize, usize)>,
    pub condition: Vec<f64>,
}

impl Prepared {
    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }
}

struct EncoderTrace {
    n_rows: usize,
    phi: MlpTrace,
    psi: Option<MlpTrace>,
    rho: MlpTrace,
}

/// Trained (or initialised) posterior estimator. Inference goes through
/// `&self` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    pub arch: NpeArch,
    pub param_names: Vec<String>,
    pub transform: ParamTransform,
    pub row_scale: Standardizer,
    /// Moments of the transformed parameters.
    pub theta_scale: Standardizer,
    pub weights: Vec<f64>,
}

/// Posterior for one dataset in unconstrained space.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mixture: Mixture,
    pub transform: ParamTransform,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PosteriorSamples {
    /// Natural-space draws.
    pub draws: Vec<Vec<f64>>,
    /// Log density of each draw in natural space.
    pub log_density: Vec<f64>,
}

impl PosteriorSamples {
    /// Draw with the highest density.
    pub fn mode(&self) -> Option<&[f64]> {
        let i = (0..self.draws.len()).max_by(|&a, &b| self.log_density[a].total_cmp(&self.log_density[b]))?;
        Some(&self.draws[i])
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        let d = self.draws.first().map_or(0, |x| x.len());
        (0..d).map(|j| self.draws.iter().map(|x| x[j]).sum::<f64>() / n).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|x| x[j]).collect()
    }
}

impl Posterior {
    /// Log density at unconstrained `u`.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        self.mixture.log_density(u)
    }

    /// Log density at natural-space `theta` (change of variables).
    pub fn log_density_natural(&self, theta: &[f64]) -> Result<f64> {
        let u = self.transform.forward(theta)?;
        Ok(self.mixture.log_density(&u) + self.transform.ln_abs_jacobian(theta))
    }

    pub fn sample_unconstrained(&self, rng: &mut RngStream) -> Vec<f64> {
        self.mixture.sample(rng)
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> PosteriorSamples {
        let mut out = PosteriorSamples::default();
        for _ in 0..n {
            let u = self.mixture.sample(rng);
            let theta = self.transform.inverse(&u);
            let ld = self.mixture.log_density(&u) + self.transform.ln_abs_jacobian(&theta);
            out.draws.push(theta);
            out.log_density.push(ld);
        }
        out
    }
}

impl PosteriorModel {
    /// Fresh weights: `1/sqrt(fan_in)` normal layers, head output scaled
    /// down, mixture means at standard normal quantiles.
    pub fn init(
        arch: NpeArch,
        param_names: Vec<String>,
        transform: ParamTransform,
        row_scale: Standardizer,
        theta_scale: Standardizer,
        rng: &mut RngStream,
    ) -> Result<Self> {
        arch.validate()?;
        if transform.dim() != arch.n_params || param_names.len() != arch.n_params {
            return Err(Error::Config("transform and parameter names must match n_params".into()));
        }
        let net = Network::new(&arch);
        let mut w = alloc::vec![0.0; net.n_weights];
        net.phi.init(&mut w, rng);
        if let Some(psi) = &net.psi {
            psi.init(&mut w, rng);
        }
        net.rho.init(&mut w, rng);
        net.head.init(&mut w, rng);
        let out = *net.head.layers.last().unwrap();
        let nw = out.n_in * out.n_out;
        for v in &mut w[out.offset..out.offset + nw] {
            *v *= 0.1;
        }
        let (m, d) = (arch.n_components, arch.n_params);
        let b = out.offset + nw;
        for j in 0..d {
            let mut order: Vec<usize> = (0..m).collect();
            rng.shuffle(&mut order);
            for k in 0..m {
                w[b + m + k * d + j] = norm_ppf((order[k] as f64 + 0.5) / m as f64);
            }
        }
        Ok(Self {
            arch,
            param_names,
            transform,
            row_scale,
            theta_scale,
            weights: w,
        })
    }

    pub fn network(&self) -> Network {
        Network::new(&self.arch)
    }

    pub fn n_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn prepare(&self, set: &EncodedSet) -> Result<Prepared> {
        if set.row_dim != self.arch.row_dim {
            return Err(Error::Encoding(alloc::format!(
                "rows have {} columns, the model expects {}",
                set.row_dim,
                self.arch.row_dim
            )));
        }
        if set.condition.len() != self.arch.cond_dim {
            return Err(Error::Encoding(alloc::format!(
                "condition has {} entries, the model expects {}",
                set.condition.len(),
                self.arch.cond_dim
            )));
        }
        let c = set.canonical();
        if c.n_rows() == 0 {
            return Err(Error::Encoding("dataset has no non-padding rows".into()));
        }
        let mut rows = Vec::with_capacity(c.rows.len());
        for i in 0..c.n_rows() {
            rows.extend(self.row_scale.apply(c.row(i)));
        }
        Ok(Prepared {
            rows,
            weights: c.weights.clone(),
            groups: c.group_ranges(),
            condition: c.condition,
        })
    }

    fn encoder_forward(&self, net: &Network, x: &Prepared) -> (Vec<f64>, EncoderTrace) {
        let p = &self.weights;
        let n = x.n_rows();
        let h = self.arch.enc_width;
        let phi = net.phi.forward(p, x.rows.clone(), n, None);
        let pool = |rows: &[f64], ws: &[f64], range: (usize, usize)| -> Vec<f64> {
            let mut acc = alloc::vec![0.0; h];
            let mut total = 0.0;
            for i in range.0..range.1 {
                super::nn::axpy(&mut acc, ws[i], &rows[i * h..(i + 1) * h]);
                total += ws[i];
            }
            acc.iter().map(|v| v / total).collect()
        };
        let (pooled, psi) = match &net.psi {
            Some(psi) => {
                let mut g = Vec::with_capacity(x.groups.len() * h);
                for &r in &x.groups {
                    g.extend(pool(&phi.output, &x.weights, r));
                }
                let t = psi.forward(p, g, x.groups.len(), None);
                let ones = alloc::vec![1.0; x.groups.len()];
                let pooled = pool(&t.output, &ones, (0, x.groups.len()));
                (pooled, Some(t))
            }
            None => (pool(&phi.output, &x.weights, (0, n)), None),
        };
        let rho = net.rho.forward(p, pooled, 1, None);
        let s = rho.output.clone();
        (
            s,
            EncoderTrace {
                n_rows: n,
                phi,
                psi,
                rho,
            },
        )
    }

    fn encoder_backward(&self, net: &Network, x: &Prepared, t: &EncoderTrace, d_summary: Vec<f64>, grad: &mut [f64]) {
        let p = &self.weights;
        let h = self.arch.enc_width;
        let d_pooled = net.rho.backward(p, grad, &t.rho, d_summary, None, true).unwrap();
        let spread = |d: &[f64], ws: &[f64], range: (usize, usize), out: &mut [f64]| {
            let total: f64 = ws[range.0..range.1].iter().sum();
            for i in range.0..range.1 {
                super::nn::axpy(&mut out[i * h..(i + 1) * h], ws[i] / total, d);
            }
        };
        let mut dh = alloc::vec![0.0; t.n_rows * h];
        match (&net.psi, &t.psi) {
            (Some(psi), Some(pt)) => {
                let ng = x.groups.len();
                let mut d_out = alloc::vec![0.0; ng * h];
                let ones = alloc::vec![1.0; ng];
                spread(&d_pooled, &ones, (0, ng), &mut d_out);
                let dg = psi.backward(p, grad, pt, d_out, None, true).unwrap();
                for (g, &r) in x.groups.iter().enumerate() {
                    spread(&dg[g * h..(g + 1) * h], &x.weights, r, &mut dh);
                }
            }
            _ => spread(&d_pooled, &x.weights, (0, t.n_rows), &mut dh),
        }
        net.phi.backward(p, grad, &t.phi, dh, None, false);
    }

    /// Summary vector of a dataset; invariant to row order and padding.
    pub fn summarize(&self, set: &EncodedSet) -> Result<Vec<f64>> {
        let x = self.prepare(set)?;
        Ok(self.encoder_forward(&self.network(), &x).0)
    }

    fn head_input(&self, summary: &[f64], condition: &[f64]) -> Vec<f64> {
        let mut u = summary.to_vec();
        u.extend_from_slice(condition);
        u
    }

    pub fn posterior_from_summary(&self, summary: &[f64], condition: &[f64]) -> Posterior {
        let net = self.network();
        let t = net.head.forward(&self.weights, self.head_input(summary, condition), 1, None);
        let mix = Mixture::from_raw(&t.output, self.arch.n_components, self.arch.n_params);
        Posterior {
            mixture: mix.affine(&self.theta_scale.mean, &self.theta_scale.sd),
            transform: self.transform.clone(),
        }
    }

    pub fn posterior(&self, set: &EncodedSet) -> Result<Posterior> {
        let s = self.summarize(set)?;
        Ok(self.posterior_from_summary(&s, &set.condition))
    }

    pub fn posterior_prepared(&self, x: &Prepared) -> Posterior {
        let (s, _) = self.encoder_forward(&self.network(), x);
        self.posterior_from_summary(&s, &x.condition)
    }

    /// Negative log density (standardised parameter space) of `z`, with
    /// gradients accumulated into `grad` when given. `dropout` supplies the
    /// stream for training-mode masks.
    pub fn pair_loss(&self, x: &Prepared, z: &[f64], dropout: Option<&mut RngStream>, grad: Option<&mut [f64]>) -> f64 {
        let net = self.network();
        let (m, d) = (self.arch.n_components, self.arch.n_params);
        let (summary, et) = self.encoder_forward(&net, x);
        let masks = dropout.map(|r| net.head.dropout_masks(1, self.arch.dropout, r));
        let ht = net.head.forward(&self.weights, self.head_input(&summary, &x.condition), 1, masks.as_deref());
        let mut d_raw = alloc::vec![0.0; raw_len(m, d)];
        let nll = nll_and_grad(&ht.output, m, d, z, &mut d_raw);
        if let Some(g) = grad {
            let du = net.head.backward(&self.weights, g, &ht, d_raw, masks.as_deref(), true).unwrap();
            self.encoder_backward(&net, x, &et, du[..self.arch.summary_dim].to_vec(), g);
        }
        nll
    }

    /// Standardised transformed parameters.
    pub fn standardize_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.theta_scale.apply(&self.transform.forward(theta)?))
    }

    /// Rejects a checkpoint that does not fit the data shape.
    pub fn check_compatible(&self, row_dim: usize, cond_dim: usize, n_params: usize) -> Result<()> {
        if (row_dim, cond_dim, n_params) != (self.arch.row_dim, self.arch.cond_dim, self.arch.n_params) {
            return Err(Error::Encoding(alloc::format!(
                "checkpoint expects rows of {}, conditions of {} and {} parameters; got {row_dim}, {cond_dim}, {n_params}",
                self.arch.row_dim,
                self.arch.cond_dim,
                self.arch.n_params
            )));
        }
        Ok(())
    }
}
