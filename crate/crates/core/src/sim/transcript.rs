use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::config::SimConfig;
use crate::planner::PlannerState;
use crate::reductions::RoundOutcome;

/// Counters accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct RunStats {
    pub solves: u64,
    pub solver_iterations: u64,
    pub non_converged: u64,
    pub clamped: u64,
    pub violations: u64,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct SimulationTranscript {
    pub config: SimConfig,
    pub rounds: Vec<RoundOutcome>,
    /// Realised payoff of every user, summed over interacted rounds.
    pub per_user_payoff: Vec<f64>,
    pub honest: Vec<usize>,
    pub stats: RunStats,
    /// Balances at the end of the run (ex-ante protocol).
    pub final_wealth: Option<Vec<f64>>,
    /// Planner serving the last round, for debug dumps.
    pub final_planner: Option<PlannerState>,
}

pub const CSV_HEADER: &str = "round,epoch,x0,x1,s,d0,d1,interacted,p0_raw,p1_raw,p0,p1,b0,b1,reported,tau0,tau1,q0,q1,w0_after,w1_after,flag";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn bit(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

impl SimulationTranscript {
    /// Per-round CSV with a header row. Floats use shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(160 * (self.rounds.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            let w = r.wealth_after;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.epoch,
                r.pair.0,
                r.pair.1,
                r.s,
                bit(r.decisions[0]),
                bit(r.decisions[1]),
                u8::from(r.interacted),
                r.raw[0],
                r.raw[1],
                r.realized[0],
                r.realized[1],
                opt(r.broadcasts[0]),
                opt(r.broadcasts[1]),
                r.reported,
                r.tau[0],
                r.tau[1],
                r.q[0],
                r.q[1],
                opt(w.map(|w| w[0])),
                opt(w.map(|w| w[1])),
                r.flags.render(),
            );
        }
        out
    }

    /// SHA-256 of [`Self::to_csv`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
