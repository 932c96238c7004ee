//! The central planner: per-pair interaction probabilities driven by cut
//! and join rates read off the learner matrix.
//!
//! Each round the planner recommends `s = P[a][b]`, receives a payoff
//! report `p`, feeds the sparse gain `E` built from `p` and `P` to the
//! learner (at rate `eps / rho`), and then moves every entry of `P` toward
//! its steady state `J / (J + C)`.

mod doubling;
mod witness;

pub use doubling::{epoch_epsilon, epoch_of, epoch_start, DoublingPlanner, EPSILON_CAP};
pub use witness::witness_matrix;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oll::{
    dim, index, AdmmState, CumulativeGain, GainMatrix, Label, OllSolver, SolveStatus, SolverSettings,
};

/// Upper bound on the learning rate accepted by [`plan_init`].
pub const MAX_EPSILON: f64 = 1.0 / 16.0;

/// Cut and join rates for every ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CutJoin {
    pub c: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

impl CutJoin {
    /// `C_ab = (X[(a,0)(b,+1)] + X[(a,-1)(b,0)]) / 4`,
    /// `J_ab = X[(a,0)(b,0)] / 4 + sqrt(eps)`.
    pub fn from_x(x: &DMatrix<f64>, epsilon: f64) -> Self {
        let n = x.nrows() / 3;
        let floor = epsilon.sqrt();
        let c = DMatrix::from_fn(n, n, |a, b| {
            0.25 * x[(index(a, Label::Zero), index(b, Label::Plus))]
                + 0.25 * x[(index(a, Label::Minus), index(b, Label::Zero))]
        });
        let j = DMatrix::from_fn(n, n, |a, b| {
            0.25 * x[(index(a, Label::Zero), index(b, Label::Zero))] + floor
        });
        Self { c, j }
    }
}

/// `Y = J / (J + C)`, the fixed point of the update under constant rates.
pub fn steady_state(cj: &CutJoin) -> DMatrix<f64> {
    cj.j.zip_map(&cj.c, |j, c| j / (j + c))
}

/// `U(P, X)`: the probability matrix obtained by updating `p` with `x`.
pub fn update_matrix(p: &DMatrix<f64>, x: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let cj = CutJoin::from_x(x, epsilon);
    apply_cut_join(p, &cj)
}

fn apply_cut_join(p: &DMatrix<f64>, cj: &CutJoin) -> DMatrix<f64> {
    DMatrix::from_fn(p.nrows(), p.ncols(), |a, b| {
        let (c, j) = (cj.c[(a, b)], cj.j[(a, b)]);
        (1.0 - c - j) * p[(a, b)] + j
    })
}

/// The sparse gain for a report `p` on pair `(a, b)` at current probability `s`.
pub fn gain_matrix(n_users: usize, a: usize, b: usize, s: f64, p: f64) -> GainMatrix {
    let mut g = GainMatrix::zero(n_users);
    if p != 0.0 {
        g.push(a, Label::Zero, b, Label::Zero, (1.0 - s) * p);
        g.push(a, Label::Zero, b, Label::Plus, -s * p);
        g.push(a, Label::Minus, b, Label::Zero, -s * p);
    }
    g
}

/// What happened during one [`PlannerState::update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateReport {
    /// The report violated `|p s| <= rho` and was clamped.
    pub clamped: bool,
    /// The learner was re-solved (false for zero reports).
    pub solved: bool,
    pub iterations: usize,
    /// The solver hit its iteration cap; its best iterate was used.
    pub non_converged: bool,
}

/// State of one planner instance with a fixed learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    n_users: usize,
    epsilon: f64,
    rho: f64,
    round: u64,
    p: DMatrix<f64>,
    x: DMatrix<f64>,
    cumulative: CumulativeGain,
    admm: AdmmState,
    solver: OllSolver,
}

/// Fresh planner with `P = 1` everywhere and planner solver settings.
pub fn plan_init(n_users: usize, epsilon: f64, rho: f64) -> Result<PlannerState> {
    PlannerState::new(n_users, epsilon, rho, OllSolver::new(SolverSettings::planner()))
}

impl PlannerState {
    pub fn new(n_users: usize, epsilon: f64, rho: f64, solver: OllSolver) -> Result<Self> {
        if n_users < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 users, got {n_users}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < MAX_EPSILON) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must lie in (0, 1/16), got {epsilon}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "payoff bound must be positive, got {rho}"
            )));
        }
        let d = dim(n_users);
        Ok(Self {
            n_users,
            epsilon,
            rho,
            round: 0,
            p: DMatrix::from_element(n_users, n_users, 1.0),
            x: DMatrix::identity(d, d),
            cumulative: CumulativeGain::new(n_users),
            admm: AdmmState::cold(n_users, &solver.settings),
            solver,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Interaction probabilities `P^t`.
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Current learner matrix `X^t` (identity before the first solve).
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Solver iterate carried into the next solve.
    pub fn admm(&self) -> &AdmmState {
        &self.admm
    }

    pub fn cumulative(&self) -> &CumulativeGain {
        &self.cumulative
    }

    pub fn cut_join(&self) -> CutJoin {
        CutJoin::from_x(&self.x, self.epsilon)
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        for user in [a, b] {
            if user >= self.n_users {
                return Err(Error::UserOutOfRange {
                    user,
                    n_users: self.n_users,
                });
            }
        }
        if a == b {
            return Err(Error::InvalidParameter(format!("self-pair ({a}, {a})")));
        }
        Ok(())
    }

    /// `s = P[a][b]`.
    pub fn recommend(&self, a: usize, b: usize) -> Result<f64> {
        self.check_pair(a, b)?;
        Ok(self.p[(a, b)])
    }

    /// Feeds the report `p` for pair `(a, b)` and advances one round.
    ///
    /// Solver non-convergence is not an error here: the best iterate is
    /// used and the report says so.
    pub fn update(&mut self, a: usize, b: usize, p: f64) -> Result<UpdateReport> {
        self.check_pair(a, b)?;
        if !p.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite report {p}")));
        }
        let s = self.p[(a, b)];
        let bound = self.rho / s;
        let mut report = UpdateReport::default();
        let p = if p.abs() > bound {
            report.clamped = true;
            p.clamp(-bound, bound)
        } else {
            p
        };

        let gain = gain_matrix(self.n_users, a, b, s, p);
        self.cumulative.add(&gain)?;
        if !gain.is_zero() {
            report.solved = true;
            let rate = self.epsilon / self.rho;
            match self.solver.solve_warm(&self.cumulative, rate, &mut self.admm) {
                Ok(sol) => {
                    report.iterations = sol.iterations;
                    self.x = sol.x;
                }
                Err(Error::NotConverged { best, iterations, .. }) => {
                    report.iterations = iterations;
                    report.non_converged = true;
                    debug_assert_eq!(best.status, SolveStatus::IterationCap);
                    self.x = best.x;
                }
                Err(e) => return Err(e),
            }
        }
        self.p = apply_cut_join(&self.p, &self.cut_join());
        self.round += 1;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oll::project_feasible;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_validates_parameters() {
        let st = plan_init(3, 0.01, 1.0).unwrap();
        assert_eq!(st.p(), &DMatrix::from_element(3, 3, 1.0));
        assert_eq!(st.round(), 0);
        assert!(plan_init(3, 0.2, 1.0).is_err());
        assert!(plan_init(3, 1.0 / 16.0, 1.0).is_err());
        assert!(plan_init(1, 0.01, 1.0).is_err());
        assert!(plan_init(3, 0.01, 0.0).is_err());
    }

    #[test]
    fn recommend_checks_pairs() {
        let st = plan_init(3, 0.01, 1.0).unwrap();
        assert_eq!(st.recommend(0, 1).unwrap(), 1.0);
        assert!(st.recommend(1, 1).is_err());
        assert!(matches!(st.recommend(0, 3), Err(Error::UserOutOfRange { .. })));
    }

    #[test]
    fn negative_report_keeps_probability_in_bounds() {
        let mut st = plan_init(3, 0.04, 1.0).unwrap();
        st.update(0, 1, -1.0).unwrap();
        let s = st.recommend(0, 1).unwrap();
        assert!(s <= 1.0 && s >= 0.2, "s = {s}");
    }

    #[test]
    fn zero_report_skips_the_solve_and_moves_toward_steady_state() {
        let mut st = plan_init(4, 0.04, 2.0).unwrap();
        st.update(0, 1, -2.0).unwrap();
        st.update(2, 3, 1.5).unwrap();
        let x_before = st.x().clone();
        let cum_before = st.cumulative().matrix().clone();
        let y = steady_state(&st.cut_join());
        let p_before = st.p().clone();
        let rep = st.update(1, 2, 0.0).unwrap();
        assert!(!rep.solved);
        assert_eq!(st.x(), &x_before);
        assert_eq!(st.cumulative().matrix(), &cum_before);
        for a in 0..4 {
            for b in 0..4 {
                let (lo, hi) = if p_before[(a, b)] < y[(a, b)] {
                    (p_before[(a, b)], y[(a, b)])
                } else {
                    (y[(a, b)], p_before[(a, b)])
                };
                let v = st.p()[(a, b)];
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn oversized_report_is_clamped_and_flagged() {
        let mut st = plan_init(2, 0.01, 1.0).unwrap();
        let rep = st.update(0, 1, 5.0).unwrap();
        assert!(rep.clamped);
        let rep = st.update(0, 1, 0.5).unwrap();
        assert!(!rep.clamped);
    }

    #[test]
    fn steady_state_examples() {
        let j = DMatrix::from_element(2, 2, 0.3);
        let cj = CutJoin { c: DMatrix::zeros(2, 2), j: j.clone() };
        assert_eq!(steady_state(&cj), DMatrix::from_element(2, 2, 1.0));
        let cj = CutJoin { c: j.clone(), j };
        assert_eq!(steady_state(&cj), DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn linear_identity_holds_for_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 3;
        for _ in 0..200 {
            let eps: f64 = rng.gen_range(1e-4..MAX_EPSILON);
            let p_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(eps.sqrt()..=1.0));
            let raw = DMatrix::from_fn(3 * n, 3 * n, |_, _| rng.gen_range(-0.5..1.5));
            let x = project_feasible(&((&raw + raw.transpose()) * 0.5)).unwrap().matrix;
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            let pay: f64 = rng.gen_range(-3.0..3.0);
            let s = p_mat[(a, b)];
            let lhs = pay * update_matrix(&p_mat, &x, eps)[(a, b)];
            let e = gain_matrix(n, a, b, s, pay);
            let beta = eps.sqrt() * pay * (1.0 - s);
            let rhs = pay * s + 0.25 * e.inner(&x) + beta;
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }
}
