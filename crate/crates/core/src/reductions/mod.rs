//! Honest-user protocols that turn raw interaction payoffs into planner
//! reports.
//!
//! Every function here reads only public round data (beacon decision,
//! broadcasts, payoff messages) so that all honest replicas compute the
//! same report and the same ledger update.

mod exante;
mod report;
mod transfer;

pub use exante::{exante_symmetrize, potential, ExAnteQuote, WealthLedger, MAX_DELTA};
pub use report::{filter_report, sym_report, Broadcasts, Report, Violation};
pub use transfer::{transfer_symmetrize, TransferQuote};

use serde::{Deserialize, Serialize};

/// The honest protocol in force for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Symmetric payoffs reported directly.
    Sym,
    /// The second party is a passive resource.
    Filter,
    /// Payoffs equalised by side payments, then reported as in `Sym`.
    Transfer,
    /// Payoffs equalised through the log-wealth currency, then as in `Sym`.
    ExAnte,
    /// Baseline without a planner: always interact.
    AlwaysInteract,
}

impl Protocol {
    pub fn uses_planner(self) -> bool {
        self != Protocol::AlwaysInteract
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sym => "sym",
            Protocol::Filter => "filter",
            Protocol::Transfer => "transfer",
            Protocol::ExAnte => "ex-ante",
            Protocol::AlwaysInteract => "always-interact",
        }
    }
}

/// The single message a party is expected to send about its own payoff,
/// as seen by its partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartnerMessage {
    Valid(f64),
    /// Missing, duplicated, non-finite or outside `[-rho, rho]`.
    Invalid,
}

impl PartnerMessage {
    pub fn from_messages(messages: &[f64], rho: f64) -> Self {
        match messages {
            [m] if m.is_finite() && m.abs() <= rho => PartnerMessage::Valid(*m),
            _ => PartnerMessage::Invalid,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            PartnerMessage::Valid(m) => Some(m),
            PartnerMessage::Invalid => None,
        }
    }
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u64,
    pub epoch: u32,
    pub pair: (usize, usize),
    /// Recommended interaction probability.
    pub s: f64,
    /// Interaction decision broadcast by each party (`None` if it sent none).
    pub decisions: [Option<bool>; 2],
    pub interacted: bool,
    /// Nature's payoffs, drawn whether or not the interaction happened.
    pub raw: [f64; 2],
    /// Payoff received by each party including side payments.
    pub realized: [f64; 2],
    /// First payoff broadcast of each party, if any.
    pub broadcasts: [Option<f64>; 2],
    pub reported: f64,
    pub tau: [f64; 2],
    pub q: [f64; 2],
    /// Balances of the two parties after the round (ex-ante protocol).
    pub wealth_after: Option<[f64; 2]>,
    pub flags: RoundFlags,
}

impl RoundOutcome {
    pub fn involves(&self, user: usize) -> bool {
        self.pair.0 == user || self.pair.1 == user
    }
}

/// Per-round diagnostic flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundFlags {
    pub violation: Option<Violation>,
    /// The report exceeded `rho / s` and was clamped by the planner.
    pub clamped: bool,
    pub non_converged: bool,
    /// A payoff message was invalid and side payments fell back to zero.
    pub message_fallback: bool,
}

impl RoundFlags {
    pub fn is_clean(&self) -> bool {
        *self == RoundFlags::default()
    }

    /// Compact `|`-separated rendering for CSV output; `ok` when clean.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.violation {
            parts.push(v.name());
        }
        if self.clamped {
            parts.push("clamped");
        }
        if self.non_converged {
            parts.push("non-converged");
        }
        if self.message_fallback {
            parts.push("message-fallback");
        }
        if parts.is_empty() {
            "ok".to_string()
        } else {
            parts.join("|")
        }
    }
}
