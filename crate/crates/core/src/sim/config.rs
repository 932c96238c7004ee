use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oll::SolverSettings;
use crate::planner::MAX_EPSILON;
use crate::reductions::Protocol;

/// How nature proposes pairs and draws payoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NatureConfig {
    /// One party may do the other a favor: cost 1, benefit `rho` with
    /// probability `(1 + benefit) / rho`. Each party is the giver with
    /// probability 1/2.
    FavorGame { benefit: f64 },
    /// `p0 = p1 = mu_ab + noise`, with a per-pair mean in `[-spread, spread]`.
    SymmetricRandom {
        spread: f64,
        #[serde(default)]
        noise: f64,
    },
    /// Independent draws around a shared per-pair mean.
    ExanteSymmetric { spread: f64, noise: f64 },
    /// Users listed in `resources` are only ever proposed as the second
    /// party and always receive 0.
    Filtering {
        resources: Vec<usize>,
        spread: f64,
        #[serde(default)]
        noise: f64,
    },
    /// `p0 = p1`, a uniform sign.
    AdversarialPm1,
    /// A fixed schedule, repeated cyclically.
    Scripted { rounds: Vec<ScriptedRound> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRound {
    pub x0: usize,
    pub x1: usize,
    pub p0: f64,
    pub p1: f64,
}

/// Behaviour of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Follows the configured protocol.
    Honest,
    /// Accepts only interactions it does not pay for and echoes its
    /// partner's broadcast.
    Defector,
    /// Adds `bias` to every payoff message and broadcast it makes.
    Misreporter { bias: f64 },
    /// Understates its own payoff in messages to collect currency.
    Hoarder { understate: f64 },
    /// Claims `rho` with members of its group, defects against others.
    Colluder { group: u32 },
    /// Never sends payoff broadcasts or messages.
    Silent,
}

impl Strategy {
    pub fn is_honest(self) -> bool {
        self == Strategy::Honest
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Honest => "honest",
            Strategy::Defector => "defector",
            Strategy::Misreporter { .. } => "misreporter",
            Strategy::Hoarder { .. } => "hoarder",
            Strategy::Colluder { .. } => "colluder",
            Strategy::Silent => "silent",
        }
    }
}

/// `count` consecutive users sharing a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyBlock {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

/// A complete, serialisable simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_rounds: u64,
    pub rho: f64,
    pub nature: NatureConfig,
    /// Blocks assigned to users `0, 1, ...` in order; counts must sum to `n_users`.
    pub strategies: Vec<StrategyBlock>,
    /// Defaults to the users with the honest strategy.
    #[serde(default)]
    pub honest_set: Option<Vec<usize>>,
    pub protocol: Protocol,
    pub seed: u64,
    /// Fixed currency parameter; otherwise chosen per epoch.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Fixed learning rate; otherwise the doubling schedule is used.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Missing fields of a partial object fall back to [`SolverSettings::default`].
    #[serde(default = "SolverSettings::planner")]
    pub solver: SolverSettings,
    /// Give every honest user its own planner replica and check they agree.
    #[serde(default)]
    pub replicas: bool,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-user strategies, expanded from the blocks.
    pub fn strategy_list(&self) -> Vec<Strategy> {
        self.strategies
            .iter()
            .flat_map(|b| std::iter::repeat(b.strategy).take(b.count))
            .collect()
    }

    pub fn honest_users(&self) -> Vec<usize> {
        match &self.honest_set {
            Some(h) => h.clone(),
            None => self
                .strategy_list()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_honest())
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_users < 2 {
            return bad(format!("n_users must be at least 2, got {}", self.n_users));
        }
        if self.n_rounds < 1 {
            return bad("n_rounds must be at least 1".into());
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        let total: usize = self.strategies.iter().map(|b| b.count).sum();
        if total != self.n_users {
            return bad(format!(
                "strategy counts sum to {total}, expected {}",
                self.n_users
            ));
        }
        for b in &self.strategies {
            match b.strategy {
                Strategy::Misreporter { bias } if !bias.is_finite() => {
                    return bad("misreporter bias must be finite".into())
                }
                Strategy::Hoarder { understate } if !(understate.is_finite() && understate >= 0.0) => {
                    return bad("hoarder understatement must be non-negative".into())
                }
                _ => {}
            }
        }
        if let Some(h) = &self.honest_set {
            let mut seen = vec![false; self.n_users];
            for &u in h {
                if u >= self.n_users || seen[u] {
                    return bad(format!("honest_set entry {u} out of range or repeated"));
                }
                seen[u] = true;
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 0.5) {
                return bad(format!("delta must lie in (0, 1/2), got {d}"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < MAX_EPSILON) {
                return bad(format!("epsilon must lie in (0, 1/16), got {e}"));
            }
        }
        self.validate_nature()
    }

    fn validate_nature(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.nature {
            NatureConfig::FavorGame { benefit } => {
                if !(*benefit >= 0.0 && self.rho > 1.0 + benefit) {
                    return bad(format!(
                        "favor game needs benefit >= 0 and rho > 1 + benefit (rho {}, benefit {benefit})",
                        self.rho
                    ));
                }
            }
            NatureConfig::SymmetricRandom { spread, noise }
            | NatureConfig::ExanteSymmetric { spread, noise } => {
                if !(*spread >= 0.0 && *noise >= 0.0 && spread.is_finite() && noise.is_finite()) {
                    return bad("spread and noise must be non-negative".into());
                }
            }
            NatureConfig::Filtering {
                resources,
                spread,
                noise,
            } => {
                if resources.is_empty() || resources.len() >= self.n_users {
                    return bad("filtering needs at least one resource and one user".into());
                }
                if resources.iter().any(|&r| r >= self.n_users) {
                    return bad("resource index out of range".into());
                }
                if !(*spread >= 0.0 && *noise >= 0.0) {
                    return bad("spread and noise must be non-negative".into());
                }
            }
            NatureConfig::AdversarialPm1 => {
                if self.rho < 1.0 {
                    return bad("adversarial +-1 nature needs rho >= 1".into());
                }
            }
            NatureConfig::Scripted { rounds } => {
                if rounds.is_empty() {
                    return bad("scripted nature needs at least one round".into());
                }
                for r in rounds {
                    if r.x0 >= self.n_users || r.x1 >= self.n_users || r.x0 == r.x1 {
                        return bad(format!("scripted pair ({}, {}) invalid", r.x0, r.x1));
                    }
                    if r.p0.abs() > self.rho || r.p1.abs() > self.rho {
                        return bad("scripted payoff outside [-rho, rho]".into());
                    }
                }
            }
        }
        Ok(())
    }
}
