use nalgebra::DMatrix;

use super::{AdmmState, CumulativeGain, Feasibility, GainMatrix, OllSolver, TOL_FEAS};
use crate::error::{Error, Result};

/// Realised regret of the learner against a fixed feasible matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretGap {
    /// `sum_t <E^t, X^t> - sum_t <E^t, reference>`; positive when the learner wins.
    pub gap: f64,
    pub learner_total: f64,
    pub reference_total: f64,
    /// `sum_t |E^t|_1^2`.
    pub l1_squared_sum: f64,
}

/// Replays the prefix solves `X^t = OLL(E^{<t})` and compares against `reference`.
pub fn oll_regret_gap(
    solver: &OllSolver,
    gains: &[GainMatrix],
    reference: &DMatrix<f64>,
    epsilon: f64,
) -> Result<RegretGap> {
    if !Feasibility::of(reference).is_feasible(TOL_FEAS) {
        return Err(Error::InvalidParameter(
            "reference matrix is not PSD with entries in [0, 1]".into(),
        ));
    }
    let Some(first) = gains.first() else {
        return Ok(RegretGap {
            gap: 0.0,
            learner_total: 0.0,
            reference_total: 0.0,
            l1_squared_sum: 0.0,
        });
    };
    let n = first.n_users();
    if reference.nrows() != 3 * n {
        return Err(Error::Dimension {
            expected: 3 * n,
            got: reference.nrows(),
        });
    }

    let mut cumulative = CumulativeGain::new(n);
    let mut state = AdmmState::cold(n, &solver.settings);
    let mut x = solver.solve_warm(&cumulative, epsilon, &mut state)?.x;
    let mut learner_total = 0.0;
    let mut reference_total = 0.0;
    let mut l1_squared_sum = 0.0;

    for (t, gain) in gains.iter().enumerate() {
        if t > 0 && !gains[t - 1].is_zero() {
            x = solver.solve_warm(&cumulative, epsilon, &mut state)?.x;
        }
        learner_total += gain.inner(&x);
        reference_total += gain.inner(reference);
        l1_squared_sum += gain.l1_norm().powi(2);
        cumulative.add(gain)?;
    }

    Ok(RegretGap {
        gap: learner_total - reference_total,
        learner_total,
        reference_total,
        l1_squared_sum,
    })
}
