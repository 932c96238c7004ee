use serde::{Deserialize, Serialize};

use super::PartnerMessage;

/// One party's side of the transfer exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferQuote {
    pub p_own: f64,
    /// What this party pays.
    pub tau_own: f64,
    /// What the partner is expected to pay.
    pub tau_partner: f64,
    /// Symmetric-instance payoff, assuming the partner pays `tau_partner`.
    pub q: f64,
    /// The partner's message was unusable and both transfers are zero.
    pub fallback: bool,
}

/// The party with the higher payoff pays half the difference, so both
/// sides end at `(p_own + p_partner) / 2`.
pub fn transfer_symmetrize(p_own: f64, partner: PartnerMessage, _rho: f64) -> TransferQuote {
    match partner {
        PartnerMessage::Valid(m) => TransferQuote {
            p_own,
            tau_own: ((p_own - m) / 2.0).max(0.0),
            tau_partner: ((m - p_own) / 2.0).max(0.0),
            q: 0.5 * (p_own + m),
            fallback: false,
        },
        PartnerMessage::Invalid => TransferQuote {
            p_own,
            tau_own: 0.0,
            tau_partner: 0.0,
            q: p_own,
            fallback: true,
        },
    }
}

impl TransferQuote {
    /// Symmetric-instance payoff given the transfer actually received.
    pub fn settle(&self, received: f64) -> f64 {
        if received == self.tau_partner {
            self.q
        } else {
            self.p_own + received - self.tau_own
        }
    }
}
