use serde::{Deserialize, Serialize};

use super::PartnerMessage;
use crate::error::{Error, Result};

/// Largest currency parameter used by the epoch schedule.
pub const MAX_DELTA: f64 = 0.4;

/// Balances of every user in the log-wealth currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthLedger {
    w: Vec<f64>,
    delta: f64,
    rho: f64,
}

/// Outcome of the currency exchange for one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExAnteQuote {
    /// Balance changes of `x0` and `x1`; `tau[0] + tau[1] == 0`.
    pub tau: [f64; 2],
    /// `(w0 m0 + w1 m1) / (w0 + w1)`, or `None` when a message was invalid.
    pub q: Option<f64>,
    /// Balances before the exchange.
    pub wealth_before: [f64; 2],
}

impl ExAnteQuote {
    /// The symmetric-instance payoff an honest party reports.
    pub fn q_for(&self, own_payoff: f64) -> f64 {
        self.q.unwrap_or(own_payoff)
    }
}

impl WealthLedger {
    /// Every balance starts at 1.
    pub fn new(n_users: usize, delta: f64, rho: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "currency parameter must lie in (0, 1/2), got {delta}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "payoff bound must be positive, got {rho}"
            )));
        }
        Ok(Self {
            w: vec![1.0; n_users],
            delta,
            rho,
        })
    }

    /// `min(sqrt(N / 2^k), MAX_DELTA)` for an epoch of length `2^k`.
    pub fn epoch_delta(n_users: usize, epoch: u32) -> f64 {
        (n_users as f64 / 2f64.powi(epoch as i32)).sqrt().min(MAX_DELTA)
    }

    pub fn n_users(&self) -> usize {
        self.w.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn balance(&self, user: usize) -> f64 {
        self.w[user]
    }

    pub fn balances(&self) -> &[f64] {
        &self.w
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Applies the currency exchange for `(x0, x1)` given both parties' public
/// payoff messages and updates the ledger.
///
/// With either message invalid both transfers are zero.
pub fn exante_symmetrize(
    ledger: &mut WealthLedger,
    x0: usize,
    x1: usize,
    messages: [PartnerMessage; 2],
) -> Result<ExAnteQuote> {
    let n = ledger.n_users();
    for user in [x0, x1] {
        if user >= n {
            return Err(Error::UserOutOfRange { user, n_users: n });
        }
    }
    if x0 == x1 {
        return Err(Error::InvalidParameter(format!("self-pair ({x0}, {x0})")));
    }
    let (w0, w1) = (ledger.w[x0], ledger.w[x1]);
    let wealth_before = [w0, w1];
    let (Some(m0), Some(m1)) = (messages[0].value(), messages[1].value()) else {
        return Ok(ExAnteQuote {
            tau: [0.0, 0.0],
            q: None,
            wealth_before,
        });
    };
    let k = ledger.delta * (w0 * w1) / (2.0 * ledger.rho * (w0 + w1));
    let tau0 = k * (m1 - m0);
    let tau1 = k * (m0 - m1);
    ledger.w[x0] = w0 + tau0;
    ledger.w[x1] = w1 + tau1;
    Ok(ExAnteQuote {
        tau: [tau0, tau1],
        q: Some((w0 * m0 + w1 * m1) / (w0 + w1)),
        wealth_before,
    })
}

/// `U(x) = (2 rho / delta) ln w(x) + p(x)` with `p(x)` the payoff so far.
pub fn potential(ledger: &WealthLedger, user: usize, cumulative_payoff: f64) -> f64 {
    2.0 * ledger.rho / ledger.delta * ledger.w[user].ln() + cumulative_payoff
}
