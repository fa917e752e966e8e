//! Dense layers over a flat parameter buffer, SiLU activations, AdamW.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::randkit::{logistic, RngStream};
#[allow(unused_imports)]
use crate::float::Float;

pub fn silu(x: f64) -> f64 {
    x * logistic(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 + x * (1.0 - s))
}

/// Four-accumulator dot product (fixed summation order).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// A fully connected layer: `n_out x n_in` row-major weights followed by
/// `n_out` biases, starting at `offset` in the parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub offset: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn n_params(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    pub fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.n_out * self.n_in]
    }

    pub fn biases<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let s = self.offset + self.n_out * self.n_in;
        &p[s..s + self.n_out]
    }

    /// `y = x W^T + b` for `n` rows.
    pub fn forward(&self, p: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        let (w, b) = (self.weights(p), self.biases(p));
        let mut y = Vec::with_capacity(n * self.n_out);
        for i in 0..n {
            let xi = &x[i * self.n_in..(i + 1) * self.n_in];
            for o in 0..self.n_out {
                y.push(dot(xi, &w[o * self.n_in..(o + 1) * self.n_in]) + b[o]);
            }
        }
        y
    }

    /// Accumulates parameter gradients for upstream gradient `dy`; returns
    /// the input gradient when requested.
    pub fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], dy: &[f64], n: usize, need_dx: bool) -> Option<Vec<f64>> {
        let w = self.weights(p);
        let (ni, no) = (self.n_in, self.n_out);
        let mut dx = if need_dx { alloc::vec![0.0; n * ni] } else { Vec::new() };
        let (gw, gb) = grad[self.offset..self.offset + self.n_params()].split_at_mut(no * ni);
        for i in 0..n {
            let xi = &x[i * ni..(i + 1) * ni];
            let di = &dy[i * no..(i + 1) * no];
            for o in 0..no {
                let g = di[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                axpy(&mut gw[o * ni..(o + 1) * ni], g, xi);
                if need_dx {
                    axpy(&mut dx[i * ni..(i + 1) * ni], g, &w[o * ni..(o + 1) * ni]);
                }
            }
        }
        need_dx.then_some(dx)
    }

    /// Normal weights with standard deviation `1 / sqrt(n_in)`, zero biases.
    pub fn init(&self, p: &mut [f64], rng: &mut RngStream) {
        let sd = 1.0 / (self.n_in as f64).sqrt();
        let nw = self.n_out * self.n_in;
        for v in &mut p[self.offset..self.offset + nw] {
            *v = sd * rng.std_normal();
        }
        for v in &mut p[self.offset + nw..self.offset + self.n_params()] {
            *v = 0.0;
        }
    }
}

/// Dense layers with SiLU between them (and after the last when
/// `activate_last`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activate_last: bool,
}

/// Forward quantities kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub n: usize,
    /// Input of each layer (after activation and dropout of the previous).
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// Layer widths `sizes[0] -> sizes[1] -> ...`, placed from `*offset`.
    pub fn new(sizes: &[usize], activate_last: bool, offset: &mut usize) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let d = Dense {
                    offset: *offset,
                    n_in: w[0],
                    n_out: w[1],
                };
                *offset += d.n_params();
                d
            })
            .collect();
        Self { layers, activate_last }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn n_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn init(&self, p: &mut [f64], rng: &mut RngStream) {
        for l in &self.layers {
            l.init(p, rng);
        }
    }

    fn activated(&self, l: usize) -> bool {
        l + 1 < self.layers.len() || self.activate_last
    }

    /// `masks[l]` (length `n * width_l`) multiplies the activated output of
    /// hidden layer `l`.
    pub fn forward(&self, p: &[f64], x: Vec<f64>, n: usize, masks: Option<&[Vec<f64>]>) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(p, &cur, n);
            let mut h: Vec<f64> = if self.activated(l) { a.iter().map(|&v| silu(v)).collect() } else { a.clone() };
            if let Some(m) = masks.and_then(|m| m.get(l)) {
                if l + 1 < self.layers.len() {
                    for (hv, mv) in h.iter_mut().zip(m) {
                        *hv *= mv;
                    }
                }
            }
            inputs.push(cur);
            pre.push(a);
            cur = h;
        }
        MlpTrace {
            n,
            inputs,
            pre,
            output: cur,
        }
    }

    pub fn backward(
        &self,
        p: &[f64],
        grad: &mut [f64],
        trace: &MlpTrace,
        d_out: Vec<f64>,
        masks: Option<&[Vec<f64>]>,
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let mut d = d_out;
        for l in (0..self.layers.len()).rev() {
            if self.activated(l) {
                if l + 1 < self.layers.len() {
                    if let Some(m) = masks.and_then(|m| m.get(l)) {
                        for (dv, mv) in d.iter_mut().zip(m) {
                            *dv *= mv;
                        }
                    }
                }
                for (dv, &a) in d.iter_mut().zip(&trace.pre[l]) {
                    *dv *= silu_grad(a);
                }
            }
            let want = need_dx || l > 0;
            match self.layers[l].backward(p, grad, &trace.inputs[l], &d, trace.n, want) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }

    /// Inverted-dropout masks for the hidden layers.
    pub fn dropout_masks(&self, n: usize, rate: f64, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let keep = 1.0 - rate;
        let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
        self.layers[..self.n_hidden()]
            .iter()
            .map(|l| (0..n * l.n_out).map(|_| if rng.bernoulli(keep) { scale } else { 0.0 }).collect())
            .collect()
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Cosine decay from `lr0` to 0 over `total` steps.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let x = (step.min(total) as f64) / total as f64;
    0.5 * lr0 * (1.0 + (core::f64::consts::PI * x).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(mlp: &Mlp, p: &[f64], x: &[f64], n: usize) -> f64 {
        let t = mlp.forward(p, x.to_vec(), n, None);
        t.output.iter().map(|v| 0.5 * v * v).sum()
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut off = 0;
        let mlp = Mlp::new(&[3, 5, 4, 2], true, &mut off);
        let mut p = alloc::vec![0.0; off];
        let mut rng = RngStream::new(1, 0);
        mlp.init(&mut p, &mut rng);
        for v in p.iter_mut() {
            *v += 0.1 * rng.std_normal();
        }
        let n = 3;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.std_normal()).collect();
        let t = mlp.forward(&p, x.clone(), n, None);
        let mut g = alloc::vec![0.0; off];
        let dx = mlp.backward(&p, &mut g, &t, t.output.clone(), None, true).unwrap();
        let h = 1e-6;
        for i in 0..off {
            let mut q = p.clone();
            q[i] += h;
            let up = loss(&mlp, &q, &x, n);
            q[i] -= 2.0 * h;
            let dn = loss(&mlp, &q, &x, n);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
        for i in 0..x.len() {
            let mut y = x.clone();
            y[i] += h;
            let up = loss(&mlp, &p, &y, n);
            y[i] -= 2.0 * h;
            let dn = loss(&mlp, &p, &y, n);
            assert!(((up - dn) / (2.0 * h) - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = alloc::vec![3.0, -2.0];
        let mut opt = AdamW::new(2, 0.0);
        for _ in 0..3000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(5e-4, 0, 100), 5e-4);
        assert!(cosine_lr(5e-4, 100, 100).abs() < 1e-20);
        assert!((cosine_lr(5e-4, 50, 100) - 2.5e-4).abs() < 1e-15);
    }
}
