//! Doubling-trick wrapper: a fresh planner at every power of two.

use super::{PlannerState, UpdateReport, MAX_EPSILON};
use crate::error::Result;
use crate::oll::OllSolver;

/// Epoch learning rates are capped just below [`MAX_EPSILON`].
pub const EPSILON_CAP: f64 = MAX_EPSILON - 1e-6;

/// Epoch serving round `t`: epoch 0 covers rounds 0 and 1, epoch `k >= 1`
/// covers `[2^k, 2^(k+1))`.
pub fn epoch_of(round: u64) -> u32 {
    if round < 2 {
        0
    } else {
        63 - round.leading_zeros()
    }
}

/// First round of epoch `k`.
pub fn epoch_start(k: u32) -> u64 {
    if k == 0 {
        0
    } else {
        1u64 << k
    }
}

/// `min(N^(2/3) 2^(-2k/3), EPSILON_CAP)`.
pub fn epoch_epsilon(n_users: usize, k: u32) -> f64 {
    let raw = (n_users as f64).powf(2.0 / 3.0) * 2f64.powf(-2.0 * k as f64 / 3.0);
    raw.min(EPSILON_CAP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublingPlanner {
    n_users: usize,
    rho: f64,
    solver: OllSolver,
    round: u64,
    epoch: u32,
    state: PlannerState,
}

impl DoublingPlanner {
    pub fn new(n_users: usize, rho: f64, solver: OllSolver) -> Result<Self> {
        let state = PlannerState::new(n_users, epoch_epsilon(n_users, 0), rho, solver)?;
        Ok(Self {
            n_users,
            rho,
            solver,
            round: 0,
            epoch: 0,
            state,
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// The planner serving the current epoch.
    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn recommend(&self, a: usize, b: usize) -> Result<f64> {
        self.state.recommend(a, b)
    }

    /// Updates the active planner, then starts a new one if the next round
    /// opens an epoch.
    pub fn update(&mut self, a: usize, b: usize, p: f64) -> Result<UpdateReport> {
        let report = self.state.update(a, b, p)?;
        self.round += 1;
        let next = epoch_of(self.round);
        if next != self.epoch {
            self.epoch = next;
            self.state =
                PlannerState::new(self.n_users, epoch_epsilon(self.n_users, next), self.rho, self.solver)?;
        }
        Ok(report)
    }
}
