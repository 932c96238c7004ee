//! Sweep and lower-bound configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use replab::reductions::Protocol;
use replab::sim::{SimConfig, Strategy, StrategyBlock};

use crate::error::{CliError, CliResult};

/// Seeds `start, start + 1, ..., start + count - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl Default for SeedRange {
    fn default() -> Self {
        Self { start: 0, count: 1 }
    }
}

impl SeedRange {
    pub fn seeds(&self, offset: u64) -> Vec<u64> {
        (0..self.count).map(|i| self.start + offset + i).collect()
    }
}

fn default_adversaries() -> Vec<Strategy> {
    vec![Strategy::Defector, Strategy::Misreporter { bias: 0.5 }]
}

/// Axes crossed into sweep cells. An empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub n_users: Vec<usize>,
    #[serde(default)]
    pub n_rounds: Vec<u64>,
    /// Honest fraction; honest users come first.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub protocol: Vec<Protocol>,
    /// Strategies shared out, in contiguous blocks, among the dishonest users
    /// whenever the population is rebuilt from `alpha`.
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<Strategy>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            n_users: Vec::new(),
            n_rounds: Vec::new(),
            alpha: Vec::new(),
            protocol: Vec::new(),
            adversaries: default_adversaries(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base: SimConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub seeds: SeedRange,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_users: usize,
    pub n_rounds: u64,
    pub alpha: f64,
    pub protocol: Protocol,
}

impl Cell {
    /// File-name friendly identifier.
    pub fn id(&self) -> String {
        format!(
            "N{}_T{}_a{}_{}",
            self.n_users,
            self.n_rounds,
            self.alpha,
            self.protocol.name()
        )
    }
}

/// Honest fraction of a config.
pub fn honest_fraction(cfg: &SimConfig) -> f64 {
    cfg.honest_users().len() as f64 / cfg.n_users as f64
}

pub fn read_config_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))
}

fn or_base<T: Clone>(axis: &[T], base: T) -> Vec<T> {
    if axis.is_empty() {
        vec![base]
    } else {
        axis.to_vec()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(&read_config_text(path)?)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.seeds.count == 0 {
            return bad("seeds.count must be positive".into());
        }
        if self.sweep.alpha.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return bad("alpha values must lie in (0, 1]".into());
        }
        if self.sweep.adversaries.iter().any(|s| s.is_honest()) || self.sweep.adversaries.is_empty() {
            return bad("adversaries must be a nonempty list of dishonest strategies".into());
        }
        for cell in self.cells() {
            self.cell_config(&cell, self.seeds.start)?;
        }
        Ok(())
    }

    /// The grid in axis order: `N`, then `alpha`, then protocol, then `T`.
    pub fn cells(&self) -> Vec<Cell> {
        let ns = or_base(&self.sweep.n_users, self.base.n_users);
        let ts = or_base(&self.sweep.n_rounds, self.base.n_rounds);
        let alphas = or_base(&self.sweep.alpha, honest_fraction(&self.base));
        let protocols = or_base(&self.sweep.protocol, self.base.protocol);
        let mut out = Vec::new();
        for &n_users in &ns {
            for &alpha in &alphas {
                for &protocol in &protocols {
                    for &n_rounds in &ts {
                        out.push(Cell {
                            n_users,
                            n_rounds,
                            alpha,
                            protocol,
                        });
                    }
                }
            }
        }
        out
    }

    /// The base config specialised to `cell` and `seed`. The population is
    /// rebuilt from `alpha` when an `alpha` axis is given or `N` changes.
    pub fn cell_config(&self, cell: &Cell, seed: u64) -> CliResult<SimConfig> {
        let mut cfg = self.base.clone();
        cfg.n_rounds = cell.n_rounds;
        cfg.protocol = cell.protocol;
        cfg.seed = seed;
        if !self.sweep.alpha.is_empty() || cell.n_users != self.base.n_users {
            cfg.n_users = cell.n_users;
            cfg.strategies = population(cell.n_users, cell.alpha, &self.sweep.adversaries);
            cfg.honest_set = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `round(alpha N)` honest users followed by near-equal blocks of each
/// adversary kind.
pub fn population(n_users: usize, alpha: f64, adversaries: &[Strategy]) -> Vec<StrategyBlock> {
    let honest = ((alpha * n_users as f64).round() as usize).min(n_users);
    let bad = n_users - honest;
    let mut blocks = Vec::new();
    if honest > 0 {
        blocks.push(StrategyBlock {
            strategy: Strategy::Honest,
            count: honest,
        });
    }
    let k = adversaries.len();
    for (i, &strategy) in adversaries.iter().enumerate() {
        let count = bad / k + usize::from(i < bad % k);
        if count > 0 {
            blocks.push(StrategyBlock { strategy, count });
        }
    }
    blocks
}

fn default_lb_sizes() -> Vec<usize> {
    vec![8, 16, 32]
}

fn default_per_user() -> Option<u64> {
    Some(16)
}

fn default_lb_seeds() -> SeedRange {
    SeedRange { start: 0, count: 100 }
}

/// Settings of the `lowerbound` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    #[serde(default = "default_lb_sizes")]
    pub n_users: Vec<usize>,
    /// Explicit horizons, crossed with every size.
    #[serde(default)]
    pub n_rounds: Vec<u64>,
    /// `T = t_per_user * N` when `n_rounds` is empty.
    #[serde(default = "default_per_user")]
    pub t_per_user: Option<u64>,
    #[serde(default = "default_lb_seeds")]
    pub seeds: SeedRange,
    /// Also run the all-honest planner against the same nature.
    #[serde(default)]
    pub planner: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            n_users: default_lb_sizes(),
            n_rounds: Vec::new(),
            t_per_user: default_per_user(),
            seeds: default_lb_seeds(),
            planner: false,
            out: None,
        }
    }
}

impl LowerBoundConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        serde_json::from_str(&read_config_text(path)?).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// `(N, T)` pairs to run.
    pub fn sizes(&self) -> CliResult<Vec<(usize, u64)>> {
        let mut out = Vec::new();
        for &n in &self.n_users {
            if self.n_rounds.is_empty() {
                let k = self
                    .t_per_user
                    .ok_or_else(|| CliError::Usage("give n_rounds or t_per_user".into()))?;
                out.push((n, k * n as u64));
            } else {
                out.extend(self.n_rounds.iter().map(|&t| (n, t)));
            }
        }
        if out.is_empty() {
            return Err(CliError::Usage("no lower-bound sizes configured".into()));
        }
        Ok(out)
    }
}
