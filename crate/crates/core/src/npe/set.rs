//! Set-valued network inputs.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// Padding / missing code.
pub const PAD: f64 = -1.0;

/// A dataset as a set of numeric rows, optionally grouped into subsets
/// (persons within households), plus the dataset-level condition vector.
///
/// `weights` hold row multiplicities and enter the pooling as weights.
/// Rows whose entries are all [`PAD`] are padding and never reach the network.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSet {
    pub row_dim: usize,
    pub rows: Vec<f64>,
    pub weights: Vec<f64>,
    /// Group offsets (`len = n_groups + 1`); `None` for a flat set.
    pub groups: Option<Vec<usize>>,
    pub condition: Vec<f64>,
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl EncodedSet {
    pub fn flat(row_dim: usize, rows: Vec<f64>, condition: Vec<f64>) -> Result<Self> {
        if row_dim == 0 || rows.len() % row_dim != 0 {
            return Err(Error::Encoding(alloc::format!(
                "row buffer of length {} is not a multiple of row_dim {row_dim}",
                rows.len()
            )));
        }
        let n = rows.len() / row_dim;
        Ok(Self {
            row_dim,
            rows,
            weights: alloc::vec![1.0; n],
            groups: None,
            condition,
        })
    }

    pub fn grouped(row_dim: usize, rows: Vec<f64>, offsets: Vec<usize>, condition: Vec<f64>) -> Result<Self> {
        let mut s = Self::flat(row_dim, rows, condition)?;
        let n = s.n_rows();
        if offsets.first() != Some(&0) || offsets.last() != Some(&n) || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Encoding("group offsets must be nondecreasing from 0 to n_rows".into()));
        }
        s.groups = Some(offsets);
        Ok(s)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.row_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.row_dim..(i + 1) * self.row_dim]
    }

    pub fn is_padding(row: &[f64]) -> bool {
        row.iter().all(|&x| x == PAD)
    }

    /// Group ranges; a flat set is one group holding every row.
    pub fn group_ranges(&self) -> Vec<(usize, usize)> {
        match &self.groups {
            Some(off) => off.windows(2).map(|w| (w[0], w[1])).collect(),
            None => alloc::vec![(0, self.n_rows())],
        }
    }

    /// Canonical form: padding rows and empty groups removed, rows sorted
    /// (and, for flat sets, identical rows merged into one weighted row),
    /// groups sorted. Two sets that differ only in row/group order or in
    /// padding have bit-identical canonical forms.
    pub fn canonical(&self) -> EncodedSet {
        let d = self.row_dim;
        match &self.groups {
            None => {
                let mut idx: Vec<usize> = (0..self.n_rows())
                    .filter(|&i| !Self::is_padding(self.row(i)) && self.weights[i] > 0.0)
                    .collect();
                idx.sort_by(|&a, &b| cmp_rows(self.row(a), self.row(b)));
                let mut rows = Vec::with_capacity(idx.len() * d);
                let mut weights: Vec<f64> = Vec::with_capacity(idx.len());
                let mut last: Option<usize> = None;
                for &i in &idx {
                    if let Some(l) = last {
                        if cmp_rows(self.row(l), self.row(i)) == Ordering::Equal {
                            *weights.last_mut().unwrap() += self.weights[i];
                            continue;
                        }
                    }
                    rows.extend_from_slice(self.row(i));
                    weights.push(self.weights[i]);
                    last = Some(i);
                }
                EncodedSet {
                    row_dim: d,
                    rows,
                    weights,
                    groups: None,
                    condition: self.condition.clone(),
                }
            }
            Some(_) => {
                let mut groups: Vec<Vec<usize>> = self
                    .group_ranges()
                    .into_iter()
                    .map(|(s, e)| {
                        let mut g: Vec<usize> = (s..e)
                            .filter(|&i| !Self::is_padding(self.row(i)) && self.weights[i] > 0.0)
                            .collect();
                        g.sort_by(|&a, &b| {
                            cmp_rows(self.row(a), self.row(b)).then(self.weights[a].total_cmp(&self.weights[b]))
                        });
                        g
                    })
                    .filter(|g| !g.is_empty())
                    .collect();
                let cmp_group = |a: &Vec<usize>, b: &Vec<usize>| {
                    for (&x, &y) in a.iter().zip(b) {
                        match cmp_rows(self.row(x), self.row(y)).then(self.weights[x].total_cmp(&self.weights[y])) {
                            Ordering::Equal => continue,
                            o => return o,
                        }
                    }
                    a.len().cmp(&b.len())
                };
                groups.sort_by(cmp_group);
                let mut rows = Vec::new();
                let mut weights = Vec::new();
                let mut offsets = alloc::vec![0usize];
                for g in &groups {
                    for &i in g {
                        rows.extend_from_slice(self.row(i));
                        weights.push(self.weights[i]);
                    }
                    offsets.push(weights.len());
                }
                EncodedSet {
                    row_dim: d,
                    rows,
                    weights,
                    groups: Some(offsets),
                    condition: self.condition.clone(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn canonical_ignores_order_and_padding() {
        let a = EncodedSet::flat(2, vec![1.0, 2.0, 0.0, 1.0, 1.0, 2.0], vec![1.0]).unwrap();
        let b = EncodedSet::flat(2, vec![0.0, 1.0, -1.0, -1.0, 1.0, 2.0, 1.0, 2.0], vec![1.0]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical().weights, vec![1.0, 2.0]);
    }

    #[test]
    fn grouped_canonical_sorts_groups() {
        let a = EncodedSet::grouped(1, vec![3.0, 1.0, 2.0], vec![0, 2, 3], vec![]).unwrap();
        let b = EncodedSet::grouped(1, vec![2.0, -1.0, 1.0, 3.0], vec![0, 2, 4], vec![]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical().groups, Some(vec![0, 2, 3]));
    }

    #[test]
    fn bad_shapes_are_encoding_errors() {
        assert!(EncodedSet::flat(3, vec![1.0; 4], vec![]).is_err());
        assert!(EncodedSet::grouped(1, vec![1.0; 3], vec![0, 4], vec![]).is_err());
    }
}
