//! The `±1` nature and the greedy two-set partition that witnesses
//! unavoidable regret of order `sqrt(N T)`.
//!
//! Pairs are uniform over distinct users and each round carries one shared
//! payoff `p = ±1` for both parties, so any planner earns zero in
//! expectation. Users `0..=N/2` seed `H1`; every later user `x` joins `H1`
//! exactly when the payoffs it shared with lower-indexed members of `H1` sum
//! to a strictly positive `P_x`. `H2` is the complement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::payoff_of_set;
use crate::oll::SolverSettings;
use crate::reductions::Protocol;
use crate::sim::{run_simulation, NatureConfig, Nature, SimConfig, Strategy, StrategyBlock};
use crate::stats::MeanStderr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pm1Round {
    pub x0: usize,
    pub x1: usize,
    pub p: f64,
}

/// The first `t` rounds of the `±1` nature for `seed`. These are the same
/// draws a simulation with that nature and seed sees.
pub fn pm1_rounds(n_users: usize, t: u64, seed: u64) -> Vec<Pm1Round> {
    let nature = Nature::new(&NatureConfig::AdversarialPm1, n_users, 1.0, seed);
    (0..t)
        .map(|r| {
            let d = nature.draw(r);
            Pm1Round {
                x0: d.x0,
                x1: d.x1,
                p: d.p0,
            }
        })
        .collect()
}

/// Builds `H1` in index order and returns it with every `P_x`.
///
/// `P_x` is reported for all users, including the seeded ones, so that
/// `sum_{x in H1} P_x` is the total shared payoff inside `H1`. Ties
/// (`P_x = 0`) exclude `x`.
pub fn build_h1(rounds: &[Pm1Round], n_users: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut pair_sum = vec![0.0; n_users * n_users];
    for r in rounds {
        if r.x0 >= n_users || r.x1 >= n_users {
            return Err(Error::UserOutOfRange {
                user: r.x0.max(r.x1),
                n_users,
            });
        }
        let (lo, hi) = (r.x0.min(r.x1), r.x0.max(r.x1));
        pair_sum[hi * n_users + lo] += r.p;
    }
    let mut in_h1 = vec![false; n_users];
    let mut p_x = vec![0.0; n_users];
    for x in 0..n_users {
        p_x[x] = (0..x)
            .filter(|&y| in_h1[y])
            .map(|y| pair_sum[x * n_users + y])
            .sum();
        in_h1[x] = x <= n_users / 2 || p_x[x] > 0.0;
    }
    let h1 = (0..n_users).filter(|&x| in_h1[x]).collect();
    Ok((h1, p_x))
}

/// `OPT(H)` for the `±1` nature: both parties receive `p`, so a round inside
/// `H` contributes `2p`.
pub fn pm1_opt(rounds: &[Pm1Round], h: &[usize], n_users: usize) -> f64 {
    let mut mask = vec![false; n_users];
    for &u in h {
        mask[u] = true;
    }
    rounds
        .iter()
        .filter(|r| mask[r.x0] && mask[r.x1])
        .map(|r| 2.0 * r.p)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRun {
    pub n_users: usize,
    pub t: u64,
    pub seed: u64,
    pub h1: Vec<usize>,
    pub h2: Vec<usize>,
    pub p_x: Vec<f64>,
    pub opt_h1: f64,
    pub opt_h2: f64,
}

impl LowerBoundRun {
    pub fn gap(&self) -> f64 {
        self.opt_h1 + self.opt_h2
    }

    /// `gap / sqrt(N T)`.
    pub fn normalized_gap(&self) -> f64 {
        self.gap() / ((self.n_users as f64) * self.t as f64).sqrt()
    }

    pub const CSV_HEADER: &'static str = "N,T,seed,opt_H1,opt_H2,gap,gap_over_sqrt_NT";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n_users,
            self.t,
            self.seed,
            self.opt_h1,
            self.opt_h2,
            self.gap(),
            self.normalized_gap()
        )
    }
}

fn check_size(n_users: usize, t: u64) -> Result<()> {
    if n_users < 2 || n_users % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "need an even number of users, got {n_users}"
        )));
    }
    if t < n_users as u64 {
        return Err(Error::InvalidParameter(format!(
            "need T >= N, got T = {t}, N = {n_users}"
        )));
    }
    Ok(())
}

pub fn lower_bound_run(n_users: usize, t: u64, seed: u64) -> Result<LowerBoundRun> {
    check_size(n_users, t)?;
    let rounds = pm1_rounds(n_users, t, seed);
    lower_bound_from_rounds(&rounds, n_users, t, seed)
}

pub fn lower_bound_from_rounds(
    rounds: &[Pm1Round],
    n_users: usize,
    t: u64,
    seed: u64,
) -> Result<LowerBoundRun> {
    let (h1, p_x) = build_h1(rounds, n_users)?;
    let h2: Vec<usize> = (0..n_users).filter(|x| !h1.contains(x)).collect();
    Ok(LowerBoundRun {
        n_users,
        t,
        seed,
        opt_h1: pm1_opt(rounds, &h1, n_users),
        opt_h2: pm1_opt(rounds, &h2, n_users),
        h1,
        h2,
        p_x,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundGap {
    pub n_users: usize,
    pub t: u64,
    pub gap: MeanStderr,
    /// Seed statistics of `gap / sqrt(N T)`.
    pub normalized: MeanStderr,
    pub opt_h1: MeanStderr,
    pub opt_h2: MeanStderr,
    pub runs: Vec<LowerBoundRun>,
}

pub fn lower_bound_gap(n_users: usize, t: u64, seeds: &[u64]) -> Result<LowerBoundGap> {
    check_size(n_users, t)?;
    let runs = seeds
        .iter()
        .map(|&s| lower_bound_run(n_users, t, s))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: &dyn Fn(&LowerBoundRun) -> f64| MeanStderr::of(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(LowerBoundGap {
        n_users,
        t,
        gap: col(&|r| r.gap()),
        normalized: col(&|r| r.normalized_gap()),
        opt_h1: col(&|r| r.opt_h1),
        opt_h2: col(&|r| r.opt_h2),
        runs,
    })
}

/// All-honest symmetric-protocol run against the `±1` nature.
pub fn pm1_planner_config(n_users: usize, t: u64, seed: u64) -> SimConfig {
    SimConfig {
        n_users,
        n_rounds: t,
        rho: 1.0,
        nature: NatureConfig::AdversarialPm1,
        strategies: vec![StrategyBlock {
            strategy: Strategy::Honest,
            count: n_users,
        }],
        honest_set: None,
        protocol: Protocol::Sym,
        seed,
        delta: None,
        epsilon: None,
        solver: SolverSettings::planner(),
        replicas: false,
    }
}

/// `p([N])` realised by the planner against the `±1` nature.
pub fn pm1_planner_payoff(n_users: usize, t: u64, seed: u64) -> Result<f64> {
    let cfg = pm1_planner_config(n_users, t, seed);
    let transcript = run_simulation(&cfg)?;
    let everyone: Vec<usize> = (0..n_users).collect();
    Ok(payoff_of_set(&transcript.rounds, &everyone))
}
