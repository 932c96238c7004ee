use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_finite, dim, index, Label};
use crate::error::{Error, Result};

/// Sparse per-round gain matrix over `(user, label)` pairs.
///
/// Entries are stored by raw `3N x 3N` coordinates; duplicates add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    n_users: usize,
    entries: Vec<((usize, usize), f64)>,
}

impl GainMatrix {
    pub fn zero(n_users: usize) -> Self {
        Self {
            n_users,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(n_users: usize, entries: Vec<((usize, usize), f64)>) -> Result<Self> {
        let d = dim(n_users);
        for &((r, c), v) in &entries {
            if r >= d || c >= d {
                return Err(Error::Dimension {
                    expected: d,
                    got: r.max(c) + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
        Ok(Self { n_users, entries })
    }

    /// Adds `value` at `((a, i), (b, j))`.
    pub fn push(&mut self, a: usize, i: Label, b: usize, j: Label, value: f64) {
        self.entries.push(((index(a, i), index(b, j)), value));
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn entries(&self) -> &[((usize, usize), f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v == 0.0)
    }

    /// Entry-wise l1 norm `|E|_1`.
    pub fn l1_norm(&self) -> f64 {
        self.to_dense().iter().map(|v| v.abs()).sum()
    }

    /// `<X, E>` against a dense `3N x 3N` matrix.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&((r, c), v)| v * x[(r, c)]).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = dim(self.n_users);
        let mut m = DMatrix::zeros(d, d);
        for &((r, c), v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Running sum of gain matrices, kept in symmetrised dense form.
///
/// For symmetric `X`, `<X, E> = <X, (E + E^T) / 2>`, so only the symmetric
/// part of the sum ever enters the learner objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeGain {
    matrix: DMatrix<f64>,
    rounds: u64,
}

impl CumulativeGain {
    pub fn new(n_users: usize) -> Self {
        let d = dim(n_users);
        Self {
            matrix: DMatrix::zeros(d, d),
            rounds: 0,
        }
    }

    /// Wraps a dense matrix; it is symmetrised on the way in.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 3 != 0 {
            return Err(Error::Dimension {
                expected: 3 * (m.nrows() / 3).max(1),
                got: m.nrows(),
            });
        }
        check_finite(&m)?;
        let matrix = (&m + m.transpose()) * 0.5;
        Ok(Self { matrix, rounds: 0 })
    }

    pub fn n_users(&self) -> usize {
        self.matrix.nrows() / 3
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn add(&mut self, gain: &GainMatrix) -> Result<()> {
        if gain.n_users() != self.n_users() {
            return Err(Error::Dimension {
                expected: self.n_users(),
                got: gain.n_users(),
            });
        }
        for &((r, c), v) in gain.entries() {
            if r == c {
                self.matrix[(r, r)] += v;
            } else {
                let half = 0.5 * v;
                self.matrix[(r, c)] += half;
                self.matrix[(c, r)] += half;
            }
        }
        self.rounds += 1;
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: &self.matrix * c,
            rounds: self.rounds,
        }
    }

    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        super::inner(x, &self.matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_norm_sums_absolute_entries() {
        let mut g = GainMatrix::zero(2);
        g.push(0, Label::Zero, 1, Label::Zero, 0.5);
        g.push(0, Label::Zero, 1, Label::Plus, -1.5);
        g.push(0, Label::Minus, 1, Label::Zero, -1.5);
        assert_eq!(g.l1_norm(), 3.5);
    }

    #[test]
    fn cumulative_is_symmetric_and_preserves_inner_products() {
        let mut g = GainMatrix::zero(2);
        g.push(0, Label::Zero, 1, Label::Plus, 2.0);
        g.push(1, Label::Minus, 1, Label::Minus, -1.0);
        let mut cum = CumulativeGain::new(2);
        cum.add(&g).unwrap();
        assert_eq!(cum.matrix(), &cum.matrix().transpose());
        let x = DMatrix::from_fn(6, 6, |i, j| ((i + j) % 4) as f64 / 4.0);
        assert!((cum.inner(&x) - g.inner(&x)).abs() < 1e-15);
        assert_eq!(cum.rounds(), 1);
    }

    #[test]
    fn rejects_out_of_range_and_non_finite() {
        assert!(GainMatrix::from_entries(1, vec![((3, 0), 1.0)]).is_err());
        assert!(GainMatrix::from_entries(1, vec![((0, 0), f64::NAN)]).is_err());
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 2)] = f64::INFINITY;
        assert!(matches!(
            CumulativeGain::from_matrix(m),
            Err(Error::NonFinite { .. })
        ));
    }
}
