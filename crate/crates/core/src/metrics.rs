//! Payoff and regret of user subsets, computed from recorded rounds.
//!
//! `p(H)` sums what members of `H` actually received (including side
//! payments) on rounds where the interaction took place. `OPT(H)` is the
//! counterfactual in which `H` interacts exactly with itself: nature's raw
//! payoffs of both parties, summed over every round pairing two members of
//! `H`, whether or not they interacted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reductions::RoundOutcome;

/// Floor applied to regrets before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-9;

fn membership(h: &[usize]) -> Vec<bool> {
    let len = h.iter().max().map_or(0, |m| m + 1);
    let mut mask = vec![false; len];
    for &u in h {
        mask[u] = true;
    }
    mask
}

fn member(mask: &[bool], u: usize) -> bool {
    mask.get(u).copied().unwrap_or(false)
}

/// `p(H)` over all rounds.
pub fn payoff_of_set(rounds: &[RoundOutcome], h: &[usize]) -> f64 {
    payoff_of_set_until(rounds, h, u64::MAX)
}

/// `p(H)` over rounds `t < until`.
pub fn payoff_of_set_until(rounds: &[RoundOutcome], h: &[usize], until: u64) -> f64 {
    let mask = membership(h);
    let mut total = 0.0;
    for r in rounds.iter().take_while(|r| r.round < until) {
        if !r.interacted {
            continue;
        }
        if member(&mask, r.pair.0) {
            total += r.realized[0];
        }
        if member(&mask, r.pair.1) {
            total += r.realized[1];
        }
    }
    total
}

/// `OPT(H)` over all rounds.
pub fn opt_of_set(rounds: &[RoundOutcome], h: &[usize]) -> f64 {
    opt_of_set_until(rounds, h, u64::MAX)
}

/// `OPT(H)` over rounds `t < until`.
pub fn opt_of_set_until(rounds: &[RoundOutcome], h: &[usize], until: u64) -> f64 {
    let mask = membership(h);
    rounds
        .iter()
        .take_while(|r| r.round < until)
        .filter(|r| member(&mask, r.pair.0) && member(&mask, r.pair.1))
        .map(|r| r.raw[0] + r.raw[1])
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub h: Vec<usize>,
    pub p_h: f64,
    pub opt_h: f64,
    /// `opt_h - p_h`.
    pub regret: f64,
    /// Realised payoff of each member of `h`, in the order of `h`.
    pub per_user: Vec<f64>,
}

impl RegretReport {
    pub fn new(rounds: &[RoundOutcome], h: &[usize]) -> Self {
        Self::until(rounds, h, u64::MAX)
    }

    pub fn until(rounds: &[RoundOutcome], h: &[usize], until: u64) -> Self {
        let mut h = h.to_vec();
        h.sort_unstable();
        h.dedup();
        let p_h = payoff_of_set_until(rounds, &h, until);
        let opt_h = opt_of_set_until(rounds, &h, until);
        let per_user = h
            .iter()
            .map(|&u| payoff_of_set_until(rounds, &[u], until))
            .collect();
        Self {
            regret: opt_h - p_h,
            h,
            p_h,
            opt_h,
            per_user,
        }
    }

    pub fn regret_per_user(&self) -> f64 {
        if self.h.is_empty() {
            0.0
        } else {
            self.regret / self.h.len() as f64
        }
    }
}

/// Least-squares line through `(ln T, ln regret)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
}

impl ScalingFit {
    pub fn predict(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t.ln()).exp()
    }
}

/// Fits `ln regret = intercept + slope ln T`. Regrets below [`LOG_FLOOR`]
/// are clamped to it.
pub fn regret_scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(t, r)| !(t > 0.0 && t.is_finite()) || !r.is_finite()) {
        return Err(Error::InvalidParameter(
            "horizons must be positive and regrets finite".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.max(LOG_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 * (1.0 + mx * mx) {
        return Err(Error::InvalidParameter("all horizons are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub t: u64,
    pub rho: f64,
    pub alpha: f64,
    pub protocol: String,
    pub seed: u64,
    pub p_h: f64,
    pub opt_h: f64,
    pub regret: f64,
    pub regret_per_honest_user: f64,
}

impl SweepRow {
    pub const HEADER: &'static str =
        "N,T,rho,alpha,protocol,seed,p_H,opt_H,regret,regret_per_honest_user";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.t,
            self.rho,
            self.alpha,
            self.protocol,
            self.seed,
            self.p_h,
            self.opt_h,
            self.regret,
            self.regret_per_honest_user
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reductions::RoundFlags;

    fn round(t: u64, pair: (usize, usize), raw: [f64; 2], interacted: bool) -> RoundOutcome {
        RoundOutcome {
            round: t,
            epoch: 0,
            pair,
            s: 1.0,
            decisions: [Some(interacted); 2],
            interacted,
            raw,
            realized: if interacted { raw } else { [0.0; 2] },
            broadcasts: [None; 2],
            reported: 0.0,
            tau: [0.0; 2],
            q: [0.0; 2],
            wealth_after: None,
            flags: RoundFlags::default(),
        }
    }

    fn sample() -> Vec<RoundOutcome> {
        vec![
            round(0, (0, 1), [1.0, -0.5], true),
            round(1, (1, 2), [-1.0, 4.0], false),
            round(2, (2, 3), [-1.0, 0.0], true),
            round(3, (3, 0), [0.5, 0.5], true),
        ]
    }

    #[test]
    fn empty_set_is_zero() {
        let r = sample();
        assert_eq!(payoff_of_set(&r, &[]), 0.0);
        assert_eq!(opt_of_set(&r, &[]), 0.0);
    }

    #[test]
    fn single_interacted_round() {
        let r = vec![round(0, (0, 1), [1.0, -0.5], true)];
        assert_eq!(payoff_of_set(&r, &[0, 1]), 0.5);
        assert_eq!(opt_of_set(&r, &[0, 1]), 0.5);
    }

    #[test]
    fn payoff_is_additive_over_a_partition() {
        let r = sample();
        let whole = payoff_of_set(&r, &[0, 1, 2, 3]);
        let parts = payoff_of_set(&r, &[0, 2]) + payoff_of_set(&r, &[3, 1]);
        assert!((whole - parts).abs() < 1e-15);
    }

    #[test]
    fn opt_counts_declined_rounds_and_needs_both_members() {
        let r = sample();
        assert_eq!(opt_of_set(&r, &[1, 2]), 3.0);
        assert_eq!(opt_of_set(&r, &[2]), 0.0);
        assert_eq!(opt_of_set_until(&r, &[0, 1, 2, 3], 2), 3.5);
    }

    #[test]
    fn report_breaks_down_per_user() {
        let rep = RegretReport::new(&sample(), &[3, 0, 0]);
        assert_eq!(rep.h, vec![0, 3]);
        assert_eq!(rep.per_user, vec![1.5, 0.5]);
        assert_eq!(rep.p_h, 2.0);
        assert_eq!(rep.opt_h, 1.0);
        assert_eq!(rep.regret, -1.0);
        assert_eq!(rep.regret_per_user(), -0.5);
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        for (exp, c) in [(2.0 / 3.0, 3.0), (1.0, 0.5)] {
            let pts: Vec<_> = (8..14).map(|k| {
                let t = f64::from(1u32 << k);
                (t, c * t.powf(exp))
            }).collect();
            let fit = regret_scaling_fit(&pts).unwrap();
            assert!((fit.slope - exp).abs() < 1e-6);
            assert!((fit.predict(1000.0) - c * 1000f64.powf(exp)).abs() < 1e-6 * c * 1000.0);
        }
    }

    #[test]
    fn degenerate_fits_are_rejected() {
        assert!(regret_scaling_fit(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(regret_scaling_fit(&[(5.0, 1.0), (5.0, 2.0), (5.0, 3.0), (5.0, 4.0)]).is_err());
        assert!(regret_scaling_fit(&[(0.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
    }

    #[test]
    fn non_positive_regrets_hit_the_floor() {
        let fit = regret_scaling_fit(&[(1.0, -1.0), (2.0, 0.0), (4.0, -3.0), (8.0, 0.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }
}
