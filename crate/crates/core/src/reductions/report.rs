use serde::{Deserialize, Serialize};

/// Why a round was reported at `-rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    MissingBroadcast,
    MultipleBroadcasts,
    OutOfRange,
    /// The two payoff broadcasts differ.
    Mismatch,
    /// A decision broadcast contradicts the beacon.
    BeaconDisagreement,
    /// Nonzero payoff broadcast for a round without interaction.
    PayoffWithoutInteraction,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::MissingBroadcast => "missing-broadcast",
            Violation::MultipleBroadcasts => "multiple-broadcasts",
            Violation::OutOfRange => "out-of-range",
            Violation::Mismatch => "mismatch",
            Violation::BeaconDisagreement => "beacon-disagreement",
            Violation::PayoffWithoutInteraction => "payoff-without-interaction",
        }
    }
}

/// Public broadcasts of the two parties in one round, in sending order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Broadcasts {
    pub decisions: [Vec<bool>; 2],
    pub payoffs: [Vec<f64>; 2],
}

impl Broadcasts {
    /// One decision and one payoff from each party.
    pub fn single(decisions: [bool; 2], payoffs: [f64; 2]) -> Self {
        Self {
            decisions: [vec![decisions[0]], vec![decisions[1]]],
            payoffs: [vec![payoffs[0]], vec![payoffs[1]]],
        }
    }

    /// Interaction happens iff both parties broadcast exactly one "interact".
    pub fn interacted(&self) -> bool {
        self.decisions.iter().all(|d| d.as_slice() == [true])
    }
}

/// The planner report derived from one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub p: f64,
    pub interacted: bool,
    pub violation: Option<Violation>,
}

fn single<T: Copy>(v: &[T]) -> Result<T, Violation> {
    match v {
        [x] => Ok(*x),
        [] => Err(Violation::MissingBroadcast),
        _ => Err(Violation::MultipleBroadcasts),
    }
}

/// Checks the listed parties in stages so the reported violation does not
/// depend on party order: multiplicity, range, beacon, then consistency
/// with the interaction outcome.
fn check_parties(
    b: &Broadcasts,
    parties: &[usize],
    beacon: bool,
    interacted: bool,
    rho: f64,
) -> Result<[f64; 2], Violation> {
    let mut pays = [0.0; 2];
    let mut decisions = [false; 2];
    for &i in parties {
        decisions[i] = single(&b.decisions[i])?;
        pays[i] = single(&b.payoffs[i])?;
    }
    if parties.iter().any(|&i| !(pays[i].is_finite() && pays[i].abs() <= rho)) {
        return Err(Violation::OutOfRange);
    }
    if parties.iter().any(|&i| decisions[i] != beacon) {
        return Err(Violation::BeaconDisagreement);
    }
    if !interacted && parties.iter().any(|&i| pays[i] != 0.0) {
        return Err(Violation::PayoffWithoutInteraction);
    }
    Ok(pays)
}

fn finish(check: Result<f64, Violation>, interacted: bool, s: f64, rho: f64) -> Report {
    match check {
        Err(v) => Report {
            p: -rho,
            interacted,
            violation: Some(v),
        },
        Ok(pay) => Report {
            p: if interacted { pay / s } else { 0.0 },
            interacted,
            violation: None,
        },
    }
}

/// Report for the symmetric-payoff protocol.
///
/// `p / s` when both parties broadcast the same in-range payoff after
/// following the beacon, 0 without interaction, `-rho` on any violation.
pub fn sym_report(s: f64, beacon: bool, b: &Broadcasts, rho: f64) -> Report {
    let interacted = b.interacted();
    let check = check_parties(b, &[0, 1], beacon, interacted, rho).and_then(|[p0, p1]| {
        if p0 == p1 {
            Ok(p0)
        } else {
            Err(Violation::Mismatch)
        }
    });
    finish(check, interacted, s, rho)
}

/// Report for collaborative filtering: only the first party is checked,
/// the second is a resource.
pub fn filter_report(s: f64, beacon: bool, b: &Broadcasts, rho: f64) -> Report {
    let interacted = b.interacted();
    let check = check_parties(b, &[0], beacon, interacted, rho).map(|[p0, _]| p0);
    finish(check, interacted, s, rho)
}
