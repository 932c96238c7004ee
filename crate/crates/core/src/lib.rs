//! Laboratory for a manipulation-resistant reputation protocol.
//!
//! The crate is organised bottom-up:
//!
//! * [`oll`] solves the log-determinant regularised SDP that drives online
//!   local learning over user labelings.
//! * [`planner`] turns the learner's output into per-pair interaction
//!   probabilities (cut/join dynamics), with a doubling-trick wrapper.
//! * [`reductions`] holds the honest-user protocols (symmetric payoffs,
//!   filtering, transfers, and the log-wealth currency).
//! * [`sim`] runs seeded multi-agent simulations against adversarial
//!   strategies and records replayable transcripts.
//! * [`metrics`] and [`lowerbound`] compute benchmark quantities from
//!   transcripts.
//!
//! Users and labels share one index layout everywhere: row/column
//! `3 * user + (label + 1)` with labels ordered `-1, 0, +1`.

pub mod error;
pub mod experiments;
pub mod lowerbound;
pub mod metrics;
pub mod oll;
pub mod planner;
pub mod reductions;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
