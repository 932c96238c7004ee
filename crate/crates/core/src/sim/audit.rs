//! Replays the wealth ledger of an ex-ante run from its transcript and
//! checks the currency and potential bounds.
//!
//! The potential of user `x` is `U(x) = (2 rho / delta) ln w(x) + p(x)`,
//! where `p(x)` is the payoff realised since the ledger was last reset.
//! When the ledger restarts at epoch boundaries each epoch is audited as its
//! own segment.

use serde::{Deserialize, Serialize};

use super::engine::ledger_delta;
use super::transcript::SimulationTranscript;
use crate::error::{Error, Result};
use crate::reductions::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExAnteAudit {
    pub segments: usize,
    /// Largest `|sum w - N|` seen after any round.
    pub max_conservation_error: f64,
    pub min_wealth: f64,
    /// Largest `|w_after / w_before - 1| / delta`; at most 1 when safe.
    pub max_relative_change: f64,
    /// Honest interacting rounds at which the per-round bound was checked.
    pub potential_checks: u64,
    /// Smallest `U^{t+1} - U^t - (q - 2 rho delta)` over those rounds.
    pub min_potential_slack: f64,
    /// Smallest `p(H) - sum_H U + (2 rho / delta) |H| ln(N / |H|)` over
    /// segment ends.
    pub min_set_slack: f64,
}

impl ExAnteAudit {
    /// All bounds hold, with `tol` slack on conservation.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_conservation_error <= tol
            && self.min_wealth > 0.0
            && self.max_relative_change <= 1.0 + 1e-12
            && self.min_potential_slack >= -1e-9
            && self.min_set_slack >= -1e-9
    }
}

struct Segment {
    delta: f64,
    w: Vec<f64>,
    payoff: Vec<f64>,
}

impl Segment {
    fn new(n: usize, delta: f64) -> Self {
        Self {
            delta,
            w: vec![1.0; n],
            payoff: vec![0.0; n],
        }
    }

    fn set_slack(&self, h: &[usize], rho: f64) -> f64 {
        if h.is_empty() {
            return 0.0;
        }
        let n = self.w.len() as f64;
        let k = h.len() as f64;
        let scale = 2.0 * rho / self.delta;
        let sum_log: f64 = h.iter().map(|&x| self.w[x].ln()).sum();
        scale * (k * (n / k).ln() - sum_log)
    }
}

/// Audits an ex-ante transcript for the honest users `h`.
pub fn audit_exante(tr: &SimulationTranscript, h: &[usize]) -> Result<ExAnteAudit> {
    let cfg = &tr.config;
    if cfg.protocol != Protocol::ExAnte {
        return Err(Error::InvalidParameter("audit needs an ex-ante transcript".into()));
    }
    let n = cfg.n_users;
    let rho = cfg.rho;
    let resets = cfg.delta.is_none() && cfg.epsilon.is_none();
    let mut honest = vec![false; n];
    for &x in h {
        honest[x] = true;
    }

    let mut audit = ExAnteAudit {
        segments: 1,
        max_conservation_error: 0.0,
        min_wealth: 1.0,
        max_relative_change: 0.0,
        potential_checks: 0,
        min_potential_slack: f64::INFINITY,
        min_set_slack: f64::INFINITY,
    };
    let mut epoch = tr.rounds.first().map_or(0, |r| r.epoch);
    let mut seg = Segment::new(n, ledger_delta(cfg, epoch));

    for r in &tr.rounds {
        if resets && r.epoch != epoch {
            audit.min_set_slack = audit.min_set_slack.min(seg.set_slack(h, rho));
            epoch = r.epoch;
            seg = Segment::new(n, ledger_delta(cfg, epoch));
            audit.segments += 1;
        }
        let (x0, x1) = r.pair;
        if !r.interacted {
            continue;
        }
        let after = r.wealth_after.ok_or_else(|| {
            Error::InvalidParameter(format!("round {} interacted without a ledger entry", r.round))
        })?;
        let scale = 2.0 * rho / seg.delta;
        for (i, &x) in [x0, x1].iter().enumerate() {
            let before = seg.w[x];
            let change = (after[i] / before - 1.0).abs() / seg.delta;
            audit.max_relative_change = audit.max_relative_change.max(change);
            audit.min_wealth = audit.min_wealth.min(after[i]);
            if honest[x] {
                let gain = scale * (after[i] / before).ln() + r.realized[i];
                let slack = gain - (r.q[i] - 2.0 * rho * seg.delta);
                audit.min_potential_slack = audit.min_potential_slack.min(slack);
                audit.potential_checks += 1;
            }
            seg.w[x] = after[i];
            seg.payoff[x] += r.realized[i];
        }
        let total: f64 = seg.w.iter().sum();
        audit.max_conservation_error = audit.max_conservation_error.max((total - n as f64).abs());
    }
    audit.min_set_slack = audit.min_set_slack.min(seg.set_slack(h, rho));
    Ok(audit)
}
