//! Seeded multi-agent simulation of the protocols.
//!
//! Nature proposes a pair and draws both payoffs, the planner recommends a
//! probability, a shared beacon turns it into a decision, agents broadcast
//! according to their strategies, and the public report is fed back to the
//! planner. Every random draw is a pure function of the seed and the round.

mod agent;
mod audit;
mod beacon;
mod config;
mod engine;
mod nature;
mod transcript;

pub use agent::View;
pub use audit::{audit_exante, ExAnteAudit};
pub use beacon::{stream, Beacon};
pub use config::{NatureConfig, ScriptedRound, SimConfig, Strategy, StrategyBlock};
pub use engine::run_simulation;
pub use nature::{favor_payoff, favor_payoff_draw, Draw, Nature};
pub use transcript::{RunStats, SimulationTranscript, CSV_HEADER};
