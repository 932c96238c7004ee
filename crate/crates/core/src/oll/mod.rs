//! Online local learning over labelings `[N] -> {-1, 0, +1}`.
//!
//! Each round the learner plays the maximiser of
//!
//! ```text
//!     eps * <X, E> + logdet(X + I)    over X >= 0 (PSD), 0 <= X_ij <= 1
//! ```
//!
//! where `E` is the cumulative gain matrix. The objective is strictly
//! concave on the feasible set, so the maximiser is unique.

mod gain;
mod project;
mod regret;
mod solver;

pub use gain::{CumulativeGain, GainMatrix};
pub use project::{project_feasible, Projection, ProjectionSettings};
pub use regret::{oll_regret_gap, RegretGap};
pub use solver::{oll_solve, AdmmState, OllSolver, SolverSettings};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility tolerance used by every check on learner output.
pub const TOL_FEAS: f64 = 1e-8;

/// A vertex label. Discriminants are the label values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Minus = -1,
    Zero = 0,
    Plus = 1,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Minus, Label::Zero, Label::Plus];

    /// Exchanges `+1` and `-1`.
    pub fn flipped(self) -> Label {
        match self {
            Label::Minus => Label::Plus,
            Label::Zero => Label::Zero,
            Label::Plus => Label::Minus,
        }
    }

    fn offset(self) -> usize {
        (self as i8 + 1) as usize
    }
}

/// Row/column of `(user, label)` in a `3N x 3N` learner matrix.
#[inline]
pub fn index(user: usize, label: Label) -> usize {
    3 * user + label.offset()
}

/// Side length of the learner matrix for `n_users`.
#[inline]
pub fn dim(n_users: usize) -> usize {
    3 * n_users
}

/// Why the solver returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationCap,
}

/// Output of one learner solve.
#[derive(Debug, Clone)]
pub struct LearnerSolution {
    pub x: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
    pub status: SolveStatus,
}

impl LearnerSolution {
    pub fn n_users(&self) -> usize {
        self.x.nrows() / 3
    }

    pub fn entry(&self, a: usize, i: Label, b: usize, j: Label) -> f64 {
        self.x[(index(a, i), index(b, j))]
    }
}

/// Entry-wise inner product `sum_ij X_ij E_ij`.
pub fn inner(x: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    x.iter().zip(e.iter()).map(|(a, b)| a * b).sum()
}

/// `eps * <X, E> + logdet(X + I)`.
///
/// Fails with [`Error::NotPositiveDefinite`] when `X + I` has no Cholesky
/// factor.
pub fn objective_value(x: &DMatrix<f64>, cumulative: &CumulativeGain, epsilon: f64) -> Result<f64> {
    let e = cumulative.matrix();
    if x.shape() != e.shape() {
        return Err(Error::Dimension {
            expected: e.nrows(),
            got: x.nrows(),
        });
    }
    Ok(epsilon * inner(x, e) + logdet_shifted(x)?)
}

/// `log det(X + I)` via Cholesky.
pub fn logdet_shifted(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    let shifted = x + DMatrix::<f64>::identity(n, n);
    let chol = shifted.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Feasibility report for a candidate learner matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub min_entry: f64,
    pub max_entry: f64,
}

impl Feasibility {
    pub fn of(x: &DMatrix<f64>) -> Self {
        let asymmetry = (x - x.transpose()).amax();
        let sym = (x + x.transpose()) * 0.5;
        let min_eigenvalue = sym.symmetric_eigenvalues().min();
        Self {
            asymmetry,
            min_eigenvalue,
            min_entry: x.min(),
            max_entry: x.max(),
        }
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.asymmetry <= 1e-12
            && self.min_eigenvalue >= -tol
            && self.min_entry >= -tol
            && self.max_entry <= 1.0 + tol
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for (col, column) in m.column_iter().enumerate() {
        for (row, v) in column.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}
