//! Finite-difference verification of the training gradient.

use alloc::vec::Vec;

use super::model::PosteriorModel;
use super::train::Batch;
use crate::randkit::RngStream;

/// Denominator floor of the relative error, so that gradients near zero are
/// judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub n_checked: usize,
}

/// Mean batch loss (no dropout) and its gradient.
pub fn loss_and_grad(model: &PosteriorModel, batch: &Batch) -> (f64, Vec<f64>) {
    let mut g = alloc::vec![0.0; model.n_weights()];
    let mut loss = 0.0;
    for (x, z) in batch {
        loss += model.pair_loss(x, z, None, Some(&mut g));
    }
    let k = batch.len() as f64;
    g.iter_mut().for_each(|v| *v /= k);
    (loss / k, g)
}

/// `|g - fd| / max(|g|, |fd|, floor)` at each index, with central differences
/// of step `eps`.
pub fn compare_gradient(model: &PosteriorModel, batch: &Batch, analytic: &[f64], eps: f64, indices: &[usize]) -> GradCheck {
    let mut m = model.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        n_checked: indices.len(),
    };
    for &i in indices {
        let w = m.weights[i];
        m.weights[i] = w + eps;
        let up = super::train::mean_loss(&m, batch);
        m.weights[i] = w - eps;
        let dn = super::train::mean_loss(&m, batch);
        m.weights[i] = w;
        let fd = (up - dn) / (2.0 * eps);
        let g = analytic[i];
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(REL_ERROR_FLOOR);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    out
}

/// Checks `n_probe` weights: a few from every layer, the rest uniformly.
pub fn grad_check(model: &PosteriorModel, batch: &Batch, eps: f64, n_probe: usize, rng: &mut RngStream) -> GradCheck {
    let (_, g) = loss_and_grad(model, batch);
    let net = model.network();
    let mut layers: Vec<_> = net.phi.layers.clone();
    if let Some(p) = &net.psi {
        layers.extend(p.layers.iter().copied());
    }
    layers.extend(net.rho.layers.iter().copied());
    layers.extend(net.head.layers.iter().copied());
    let mut idx = Vec::with_capacity(n_probe + 4 * layers.len());
    for l in &layers {
        for _ in 0..3 {
            idx.push(l.offset + rng.below(l.n_in * l.n_out));
        }
        idx.push(l.offset + l.n_in * l.n_out + rng.below(l.n_out));
    }
    while idx.len() < n_probe {
        idx.push(rng.below(model.n_weights()));
    }
    idx.sort_unstable();
    idx.dedup();
    compare_gradient(model, batch, &g, eps, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::npe::model::tests::toy_model;
    use crate::npe::model::PosteriorModel;
    use crate::npe::set::EncodedSet;
    use crate::npe::train::mean_loss;

    fn batch(m: &PosteriorModel, grouped: bool, rng: &mut RngStream) -> Batch {
        (0..4)
            .map(|_| {
                let n = 6;
                let rows: Vec<f64> = (0..n * 3).map(|_| rng.std_normal()).collect();
                let set = if grouped {
                    EncodedSet::grouped(3, rows, alloc::vec![0, 2, 3, 6], alloc::vec![1.0, 0.0]).unwrap()
                } else {
                    EncodedSet::flat(3, rows, alloc::vec![0.0, 1.0]).unwrap()
                };
                let z = alloc::vec![rng.std_normal(), rng.std_normal()];
                (m.prepare(&set).unwrap(), z)
            })
            .collect()
    }

    #[test]
    fn gradients_match_at_initialisation() {
        for grouped in [false, true] {
            let m = toy_model(grouped, 10);
            let mut rng = RngStream::new(11, 0);
            let b = batch(&m, grouped, &mut rng);
            let r = grad_check(&m, &b, 1e-5, 200, &mut rng);
            assert!(r.max_rel_error < 1e-5, "grouped={grouped}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_detected() {
        let m = toy_model(false, 12);
        let mut rng = RngStream::new(13, 0);
        let b = batch(&m, false, &mut rng);
        let (_, mut g) = loss_and_grad(&m, &b);
        let first = m.network().phi.layers[0];
        for v in &mut g[first.offset..first.offset + first.n_in * first.n_out] {
            *v *= 1.5;
        }
        let idx: Vec<usize> = (first.offset..first.offset + first.n_in * first.n_out).collect();
        assert!(compare_gradient(&m, &b, &g, 1e-5, &idx).max_rel_error > 1e-3);
    }

    #[test]
    fn zero_network_has_zero_input_layer_gradient() {
        let mut m = toy_model(false, 14);
        m.weights.iter_mut().for_each(|w| *w = 0.0);
        let mut rng = RngStream::new(15, 0);
        let b = batch(&m, false, &mut rng);
        let (loss, g) = loss_and_grad(&m, &b);
        assert!((loss - mean_loss(&m, &b)).abs() < 1e-15);
        let first = m.network().phi.layers[0];
        assert!(g[first.offset..first.offset + first.n_params()].iter().all(|&v| v == 0.0));
    }
}
