use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oll::{dim, index, Label};

/// `v v^T` with `v[(a,0)] = 1` for `a` in `h` and `v[(a,+1)] = 1` otherwise.
///
/// `side = 1` exchanges the `+1` and `-1` labels, the mirror image under
/// swapping the roles of the two parties.
pub fn witness_matrix(h: &[usize], side: u8, n_users: usize) -> Result<DMatrix<f64>> {
    if h.is_empty() {
        return Err(Error::InvalidParameter("witness set must be nonempty".into()));
    }
    if side > 1 {
        return Err(Error::InvalidParameter(format!("side must be 0 or 1, got {side}")));
    }
    let mut member = vec![false; n_users];
    for &a in h {
        if a >= n_users {
            return Err(Error::UserOutOfRange { user: a, n_users });
        }
        member[a] = true;
    }
    let outside = if side == 0 { Label::Plus } else { Label::Minus };
    let mut v = DVector::zeros(dim(n_users));
    for (a, &inside) in member.iter().enumerate() {
        let label = if inside { Label::Zero } else { outside };
        v[index(a, label)] = 1.0;
    }
    Ok(&v * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_fills_the_zero_block() {
        let x = witness_matrix(&[0, 1, 2], 0, 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(x[(index(a, Label::Zero), index(b, Label::Zero))], 1.0);
            }
        }
        assert_eq!(x.sum(), 9.0);
    }

    #[test]
    fn two_users_by_hand() {
        let x = witness_matrix(&[0], 0, 2).unwrap();
        let (a0, b1) = (index(0, Label::Zero), index(1, Label::Plus));
        assert_eq!(x[(a0, b1)], 1.0);
        assert_eq!(x[(a0, a0)], 1.0);
        assert_eq!(x[(b1, b1)], 1.0);
        assert_eq!(x.sum(), 4.0);
        let mirrored = witness_matrix(&[0], 1, 2).unwrap();
        assert_eq!(mirrored[(a0, index(1, Label::Minus))], 1.0);
    }

    #[test]
    fn single_nonzero_eigenvalue_equals_n() {
        let x = witness_matrix(&[1, 3], 0, 5).unwrap();
        let mut eig: Vec<f64> = x.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - 5.0).abs() < 1e-12);
        assert!(eig[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(witness_matrix(&[], 0, 3).is_err());
        assert!(witness_matrix(&[3], 0, 3).is_err());
        assert!(witness_matrix(&[0], 2, 3).is_err());
    }
}
