//! Reusable experiment drivers: learner smoothness trials, the favor-game
//! regret sweep, and the frozen calibration constants.
//!
//! Calibration and acceptance runs call the same functions with disjoint
//! seed ranges.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RegretReport;
use crate::oll::{dim, oll_regret_gap, AdmmState, CumulativeGain, GainMatrix, OllSolver, SolverSettings};
use crate::planner::{gain_matrix, steady_state, witness_matrix, PlannerState};
use crate::reductions::Protocol;
use crate::sim::{run_simulation, Nature, NatureConfig, SimConfig, SimulationTranscript, Strategy, StrategyBlock};

/// Constants frozen by `replab calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: String,
    pub smoothness: SmoothnessCalibration,
    pub regret_envelope: EnvelopeCalibration,
    pub lower_bound: LowerBoundCalibration,
    pub learner_regret: LearnerRegretCalibration,
    pub slow_change: SlowChangeCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCalibration {
    /// Bound on `|dX|_inf / (eps |E^t|_1)`.
    pub c_s: f64,
    pub max_ratio: f64,
    pub margin: f64,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCalibration {
    /// Bound on `regret(H) / (rho (N T^2)^(1/3))`.
    pub c: f64,
    pub max_ratio: f64,
    pub margin: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCalibration {
    /// Accepted range of the mean of `gap / sqrt(N T)`.
    pub c_lo: f64,
    pub c_hi: f64,
    pub mean_normalized_gap: f64,
    pub n_users: usize,
    pub t: u64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerRegretCalibration {
    /// Bound on `-gap / (eps sum_t |E^t|_1^2 + N / eps)`.
    pub c: f64,
    pub max_ratio: f64,
    pub margin: f64,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowChangeCalibration {
    /// Bound on `sum_t |dP_ab| / ((sqrt(eps) / rho) sum_t |p^t| + 1)`.
    pub c_y: f64,
    /// Bound on `|Y^{t+1} - Y^t|_inf / ((sqrt(eps) / rho) |p^t|)`.
    pub c_y_prime: f64,
    pub max_path_ratio: f64,
    pub max_step_ratio: f64,
    pub margin: f64,
    pub seed: u64,
    pub trials: usize,
}

/// Committed calibration output.
pub const CALIBRATION_JSON: &str = include_str!("../fixtures/calibration.json");

impl Calibration {
    pub fn frozen() -> Result<Self> {
        serde_json::from_str(CALIBRATION_JSON).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Solver settings for experiments that difference two solutions.
pub fn tight_solver() -> OllSolver {
    OllSolver::new(SolverSettings {
        tol_residual: 1e-10,
        max_iterations: 20_000,
        ..SolverSettings::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessTrial {
    pub n_users: usize,
    pub epsilon: f64,
    /// `|E^t|_1`.
    pub step_l1: f64,
    /// `|OLL(E^{<=t}) - OLL(E^{<t})|_inf`.
    pub change: f64,
    pub ratio: f64,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// One random trial: dense random history, sparse random step.
pub fn smoothness_trial<R: Rng>(rng: &mut R, n_users: usize, solver: &OllSolver) -> Result<SmoothnessTrial> {
    let d = dim(n_users);
    let epsilon = log_uniform(rng, 0.01, 0.5);
    let scale = log_uniform(rng, 0.1, 20.0);
    let history = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0) * scale);
    let before = CumulativeGain::from_matrix(history)?;

    let k = rng.gen_range(1..=4);
    let entries = (0..k)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            ((rng.gen_range(0..d), rng.gen_range(0..d)), sign * log_uniform(rng, 0.1, 5.0))
        })
        .collect();
    let step = GainMatrix::from_entries(n_users, entries)?;
    let mut after = before.clone();
    after.add(&step)?;

    let mut state = AdmmState::cold(n_users, &solver.settings);
    let x0 = solver.solve_warm(&before, epsilon, &mut state)?.x;
    let x1 = solver.solve_warm(&after, epsilon, &mut state)?.x;
    let change = (&x1 - &x0).amax();
    let step_l1 = step.l1_norm();
    Ok(SmoothnessTrial {
        n_users,
        epsilon,
        step_l1,
        change,
        ratio: change / (epsilon * step_l1),
    })
}

/// `trials` trials cycling through `sizes`, all from one seed.
pub fn smoothness_trials(seed: u64, trials: usize, sizes: &[usize]) -> Result<Vec<SmoothnessTrial>> {
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("no sizes given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solver = tight_solver();
    (0..trials)
        .map(|i| smoothness_trial(&mut rng, sizes[i % sizes.len()], &solver))
        .collect()
}

/// Random feasible matrix `V V^T / max`, with `V` entry-wise non-negative.
pub fn random_feasible<R: Rng>(rng: &mut R, n_users: usize) -> DMatrix<f64> {
    let d = dim(n_users);
    let rank = rng.gen_range(1..=d);
    let v = DMatrix::from_fn(d, rank, |_, _| rng.gen_range(0.0..1.0));
    let m = &v * v.transpose();
    let top = m.max();
    if top > 0.0 {
        m / top
    } else {
        m
    }
}

/// Identity, every witness `X^H` (both sides), and `random` random feasible
/// matrices.
pub fn reference_candidates<R: Rng>(rng: &mut R, n_users: usize, random: usize) -> Result<Vec<DMatrix<f64>>> {
    let mut out = vec![DMatrix::identity(dim(n_users), dim(n_users))];
    for mask in 1u32..(1 << n_users) {
        let h: Vec<usize> = (0..n_users).filter(|&a| mask >> a & 1 == 1).collect();
        for side in 0..2 {
            out.push(witness_matrix(&h, side, n_users)?);
        }
    }
    out.extend((0..random).map(|_| random_feasible(rng, n_users)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerRegretTrial {
    pub epsilon: f64,
    pub rounds: usize,
    /// Learner total minus the best candidate's total.
    pub gap: f64,
    pub l1_squared_sum: f64,
    /// `-gap / (eps sum |E^t|_1^2 + N / eps)`.
    pub ratio: f64,
}

/// `rounds` random planner-shaped gains against the best reference candidate.
pub fn learner_regret_trial<R: Rng>(
    rng: &mut R,
    n_users: usize,
    rounds: usize,
    solver: &OllSolver,
) -> Result<LearnerRegretTrial> {
    let epsilon = log_uniform(rng, 0.01, 0.5);
    let gains: Vec<GainMatrix> = (0..rounds)
        .map(|_| {
            let a = rng.gen_range(0..n_users);
            let b = (a + rng.gen_range(1..n_users)) % n_users;
            gain_matrix(n_users, a, b, rng.gen_range(0.0..1.0), rng.gen_range(-2.0..2.0))
        })
        .collect();
    let candidates = reference_candidates(rng, n_users, 50)?;
    let first = oll_regret_gap(solver, &gains, &candidates[0], epsilon)?;
    let best = candidates
        .iter()
        .map(|c| gains.iter().map(|g| g.inner(c)).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = first.learner_total - best;
    let scale = epsilon * first.l1_squared_sum + n_users as f64 / epsilon;
    Ok(LearnerRegretTrial {
        epsilon,
        rounds,
        gap,
        l1_squared_sum: first.l1_squared_sum,
        ratio: -gap / scale,
    })
}

/// `trials` independent trials at `N = 4`, 200 rounds each.
pub fn learner_regret_trials(seed: u64, trials: usize) -> Result<Vec<LearnerRegretTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solver = OllSolver::new(SolverSettings::default());
    (0..trials)
        .map(|_| learner_regret_trial(&mut rng, 4, 200, &solver))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowChangeTrial {
    pub epsilon: f64,
    pub rounds: u64,
    /// Largest per-pair `sum_t |dP_ab| / ((sqrt(eps) / rho) sum_t |p^t| + 1)`.
    pub path_ratio: f64,
    /// Largest `|Y^{t+1} - Y^t|_inf / ((sqrt(eps) / rho) |p^t|)` over
    /// non-zero reports.
    pub step_ratio: f64,
}

/// Drives a fixed-rate planner with importance-weighted favor-game reports:
/// the pair interacts with probability `s` and then reports its mean payoff
/// divided by `s`.
pub fn slow_change_trial(seed: u64, n_users: usize, rounds: u64, epsilon: f64, rho: f64) -> Result<SlowChangeTrial> {
    let nature = Nature::new(&NatureConfig::FavorGame { benefit: 0.2 }, n_users, rho, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_0e);
    let mut st = PlannerState::new(n_users, epsilon, rho, OllSolver::new(SolverSettings::default()))?;
    let mut path = DMatrix::<f64>::zeros(n_users, n_users);
    let mut total_report = 0.0;
    let mut step_ratio: f64 = 0.0;
    let mut y = steady_state(&st.cut_join());
    let unit = epsilon.sqrt() / rho;
    for t in 0..rounds {
        let d = nature.draw(t);
        let s = st.recommend(d.x0, d.x1)?;
        let p = if rng.gen_bool(s) { 0.5 * (d.p0 + d.p1) / s } else { 0.0 };
        let before = st.p().clone();
        st.update(d.x0, d.x1, p)?;
        path += (st.p() - before).abs();
        total_report += p.abs();
        let y_next = steady_state(&st.cut_join());
        if p != 0.0 {
            step_ratio = step_ratio.max((&y_next - &y).amax() / (unit * p.abs()));
        }
        y = y_next;
    }
    Ok(SlowChangeTrial {
        epsilon,
        rounds,
        path_ratio: path.max() / (unit * total_report + 1.0),
        step_ratio,
    })
}

/// `trials` runs at `N = 4`, 500 rounds, `rho = 2`, with rates spread over
/// `[0.001, 0.06]`.
pub fn slow_change_trials(seed: u64, trials: usize) -> Result<Vec<SlowChangeTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|i| {
            let eps = log_uniform(&mut rng, 0.001, 0.06);
            slow_change_trial(seed.wrapping_add(i as u64), 4, 500, eps, 2.0)
        })
        .collect()
}

/// The favor-game regret experiment at one `(N, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavorCell {
    pub n_users: usize,
    pub alpha: f64,
    pub rho: f64,
    pub benefit: f64,
    pub misreport_bias: f64,
    /// Checkpoints; the run length is the largest.
    pub horizons: Vec<u64>,
    /// Random honest subsets scored per run.
    pub subsets: usize,
}

impl FavorCell {
    pub fn standard(alpha: f64) -> Self {
        Self {
            n_users: 16,
            alpha,
            rho: 4.0,
            benefit: 0.2,
            misreport_bias: 0.5,
            horizons: (8..=13).map(|k| 1u64 << k).collect(),
            subsets: 50,
        }
    }

    pub fn n_honest(&self) -> usize {
        (self.alpha * self.n_users as f64).round() as usize
    }

    /// Honest users first, then defectors, then misreporters.
    pub fn config(&self, seed: u64) -> SimConfig {
        let h = self.n_honest();
        let bad = self.n_users - h;
        let mut strategies = vec![StrategyBlock {
            strategy: Strategy::Honest,
            count: h,
        }];
        if bad > 0 {
            strategies.push(StrategyBlock {
                strategy: Strategy::Defector,
                count: bad.div_ceil(2),
            });
        }
        if bad > 1 {
            strategies.push(StrategyBlock {
                strategy: Strategy::Misreporter {
                    bias: self.misreport_bias,
                },
                count: bad / 2,
            });
        }
        SimConfig {
            n_users: self.n_users,
            n_rounds: self.horizons.iter().copied().max().unwrap_or(0),
            rho: self.rho,
            nature: NatureConfig::FavorGame {
                benefit: self.benefit,
            },
            strategies,
            honest_set: None,
            protocol: Protocol::ExAnte,
            seed,
            delta: None,
            epsilon: None,
            solver: SolverSettings::planner(),
            replicas: false,
        }
    }

    /// `alpha * benefit * T / N`: the payoff per honest user if honest users
    /// traded only with each other.
    pub fn target_payoff(&self, t: u64) -> f64 {
        self.alpha * self.benefit * t as f64 / self.n_users as f64
    }
}

/// `rho (N T^2)^(1/3)`.
pub fn envelope(rho: f64, n_users: usize, t: u64) -> f64 {
    rho * (n_users as f64 * (t as f64).powi(2)).cbrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRegret {
    pub t: u64,
    pub h: Vec<usize>,
    pub regret: f64,
    /// `regret / envelope(rho, N, t)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavorRun {
    pub seed: u64,
    /// Whole honest set at every checkpoint.
    pub checkpoints: Vec<RegretReport>,
    pub horizons: Vec<u64>,
    pub subsets: Vec<SubsetRegret>,
}

/// Non-empty random subsets of `pool`, drawn from `seed`.
pub fn random_subsets(pool: &[usize], count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e75);
    (0..count)
        .map(|_| {
            let size = rng.gen_range(1..=pool.len());
            let mut h: Vec<usize> = pool.choose_multiple(&mut rng, size).copied().collect();
            h.sort_unstable();
            h
        })
        .collect()
}

/// Scores a finished run at every checkpoint. A run of length `T` is the
/// prefix of any longer run with the same seed, so one run covers all
/// horizons.
pub fn score_favor_run(cell: &FavorCell, tr: &SimulationTranscript) -> FavorRun {
    let honest = &tr.honest;
    let checkpoints = cell
        .horizons
        .iter()
        .map(|&t| RegretReport::until(&tr.rounds, honest, t))
        .collect();
    let mut subsets = Vec::new();
    if !honest.is_empty() {
        for h in random_subsets(honest, cell.subsets, tr.config.seed) {
            for &t in &cell.horizons {
                let regret = RegretReport::until(&tr.rounds, &h, t).regret;
                subsets.push(SubsetRegret {
                    t,
                    ratio: regret / envelope(cell.rho, cell.n_users, t),
                    h: h.clone(),
                    regret,
                });
            }
        }
    }
    FavorRun {
        seed: tr.config.seed,
        checkpoints,
        horizons: cell.horizons.clone(),
        subsets,
    }
}

pub fn favor_run(cell: &FavorCell, seed: u64) -> Result<FavorRun> {
    let tr = run_simulation(&cell.config(seed))?;
    Ok(score_favor_run(cell, &tr))
}
