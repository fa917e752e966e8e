//! Raking weights that make a sample match population margins.

use alloc::vec;
use alloc::vec::Vec;

use super::{CovariateRecord, MarginTable, MISSING, N_DIMS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpfOptions {
    /// Stop once every weighted margin is within `tol` of its target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IpfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

/// Weighted share of each category per dimension, over records observed in
/// that dimension.
pub fn weighted_margins(sample: &[CovariateRecord], weights: &[f64], cards: [usize; N_DIMS]) -> [Vec<f64>; N_DIMS] {
    core::array::from_fn(|d| {
        let mut m = vec![0.0; cards[d]];
        let mut tot = 0.0;
        for (r, &w) in sample.iter().zip(weights) {
            let c = r.codes[d];
            if c != MISSING {
                m[c as usize] += w;
                tot += w;
            }
        }
        if tot > 0.0 {
            m.iter_mut().for_each(|x| *x /= tot);
        }
        m
    })
}

fn worst_gap(current: &[Vec<f64>; N_DIMS], margins: &MarginTable) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for d in 0..N_DIMS {
        for (a, b) in current[d].iter().zip(&margins.margins[d]) {
            let g = (a - b).abs();
            if g > worst.0 {
                worst = (g, d);
            }
        }
    }
    worst
}

/// Iterative proportional fitting. Each dimension is raked over the records
/// that observe it; missing codes leave a record's weight untouched in that
/// step. Weights are returned normalized to mean 1.
pub fn ipf_weights(sample: &[CovariateRecord], margins: &MarginTable, opts: IpfOptions) -> Result<Vec<f64>> {
    margins.validate()?;
    if sample.is_empty() {
        return Err(Error::Precondition("IPF needs a non-empty sample".into()));
    }
    let cards: [usize; N_DIMS] = core::array::from_fn(|d| margins.margins[d].len());
    for r in sample {
        for d in 0..N_DIMS {
            let c = r.codes[d];
            if c != MISSING && (c < 0 || c as usize >= cards[d]) {
                return Err(Error::Precondition(alloc::format!("code {c} out of range in dimension {d}")));
            }
        }
    }
    for d in 0..N_DIMS {
        let mut counts = vec![0usize; cards[d]];
        for r in sample {
            if r.codes[d] != MISSING {
                counts[r.codes[d] as usize] += 1;
            }
        }
        if let Some(c) = (0..cards[d]).find(|&c| counts[c] == 0 && margins.margins[d][c] > 0.0) {
            return Err(Error::Convergence {
                iterations: 0,
                worst_gap: margins.margins[d][c],
                dimension: d,
            });
        }
    }

    let mut w = vec![1.0; sample.len()];
    let mut iterations = 0;
    loop {
        let current = weighted_margins(sample, &w, cards);
        let (gap, dim) = worst_gap(&current, margins);
        if gap <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations,
                worst_gap: gap,
                dimension: dim,
            });
        }
        for d in 0..N_DIMS {
            let current = weighted_margins(sample, &w, cards);
            let factors: Vec<f64> = current[d]
                .iter()
                .zip(&margins.margins[d])
                .map(|(&have, &want)| if have > 0.0 { want / have } else { 0.0 })
                .collect();
            for (wi, r) in w.iter_mut().zip(sample) {
                let c = r.codes[d];
                if c != MISSING {
                    *wi *= factors[c as usize];
                }
            }
        }
        iterations += 1;
    }
    let m = super::mean(w.iter().copied());
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Numeric("IPF weights degenerated".into()));
    }
    w.iter_mut().for_each(|x| *x /= m);
    Ok(w)
}
