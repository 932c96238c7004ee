//! Frobenius projection onto `{X PSD} ∩ {0 <= X_ij <= 1}` by Dykstra's
//! alternating projections.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::check_finite;
use super::solver::symmetrize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSettings {
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius gap between the last PSD and box iterates.
    pub residual: f64,
}

/// Projects a symmetric matrix with default settings.
pub fn project_feasible(m: &DMatrix<f64>) -> Result<Projection> {
    project_feasible_with(m, &ProjectionSettings::default())
}

pub fn project_feasible_with(m: &DMatrix<f64>, settings: &ProjectionSettings) -> Result<Projection> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    check_finite(m)?;
    let mut x = m.clone();
    symmetrize(&mut x);
    let mut p = DMatrix::zeros(m.nrows(), m.ncols());
    let mut q = DMatrix::zeros(m.nrows(), m.ncols());
    let mut residual = f64::INFINITY;

    for k in 1..=settings.max_iterations {
        let y = project_psd(&(&x + &p));
        p = &x + &p - &y;
        let x_new = project_box(&(&y + &q));
        q = &y + &q - &x_new;
        residual = (&y - &x_new).norm();
        let step = (&x_new - &x).norm();
        x = x_new;
        if residual <= settings.tol && step <= settings.tol {
            return Ok(Projection {
                matrix: x,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::ProjectionNotConverged {
        iterations: settings.max_iterations,
        residual,
        best: x,
    })
}

/// Nearest PSD matrix: clip negative eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= v.max(0.0);
    }
    let mut out = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn project_box(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oll::{Feasibility, TOL_FEAS};

    #[test]
    fn feasible_input_is_unchanged() {
        let v = nalgebra::DVector::from_vec(vec![1.0, 0.5, 0.0, 0.25, 1.0, 0.75]);
        let m = &v * v.transpose() * 0.5 + DMatrix::identity(6, 6) * 0.25;
        let proj = project_feasible(&m).unwrap();
        assert!((&proj.matrix - &m).amax() < 1e-12);
    }

    #[test]
    fn negative_identity_goes_to_zero() {
        let proj = project_feasible(&(-DMatrix::<f64>::identity(6, 6))).unwrap();
        assert!(proj.matrix.amax() < 1e-12);
    }

    #[test]
    fn twice_all_ones_lands_in_the_box() {
        let proj = project_feasible(&DMatrix::from_element(3, 3, 2.0)).unwrap();
        assert!(Feasibility::of(&proj.matrix).is_feasible(TOL_FEAS));
        assert!((proj.matrix.clone() - DMatrix::from_element(3, 3, 1.0)).amax() < 1e-9);
    }

    #[test]
    fn indefinite_input_becomes_feasible() {
        let m = DMatrix::from_fn(6, 6, |i, j| if i == j { 0.2 } else if (i + j) % 2 == 0 { 0.9 } else { -0.4 });
        let proj = project_feasible(&m).unwrap();
        assert!(Feasibility::of(&proj.matrix).is_feasible(TOL_FEAS));
    }
}
