//! What each strategy sends in a round.
//!
//! Agents see only the public round data plus their own payoff; the engine
//! passes that in a [`View`].

use super::config::Strategy;
use crate::reductions::Protocol;

/// The information available to one party when it acts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    /// 0 for the first party of the pair, 1 for the second.
    pub role: usize,
    pub own_raw: f64,
    pub beacon: bool,
    pub protocol: Protocol,
    pub rho: f64,
    /// The partner is a colluder from the same group.
    pub ally: bool,
}

impl Strategy {
    fn acts_as_defector(self, v: &View) -> bool {
        match self {
            Strategy::Defector => true,
            Strategy::Colluder { .. } => !v.ally,
            _ => false,
        }
    }

    /// Decision broadcasts.
    pub fn decisions(self, v: &View) -> Vec<bool> {
        if self.acts_as_defector(v) {
            return vec![v.own_raw >= 0.0];
        }
        let follows_beacon = match v.protocol {
            Protocol::AlwaysInteract => false,
            Protocol::Filter => v.role == 0,
            _ => true,
        };
        vec![if follows_beacon { v.beacon } else { true }]
    }

    /// Payoff messages sent to the partner after an interaction.
    pub fn messages(self, v: &View) -> Vec<f64> {
        let clip = |x: f64| x.clamp(-v.rho, v.rho);
        match self {
            Strategy::Silent => vec![],
            Strategy::Misreporter { bias } => vec![clip(v.own_raw + bias)],
            Strategy::Hoarder { understate } => vec![clip(v.own_raw - understate)],
            Strategy::Colluder { .. } if v.ally => vec![v.rho],
            _ => vec![v.own_raw],
        }
    }

    /// Side payment actually made, given what the protocol asks for.
    pub fn pays(self, v: &View, owed: f64) -> f64 {
        match self {
            Strategy::Honest | Strategy::Misreporter { .. } | Strategy::Hoarder { .. } => owed,
            Strategy::Colluder { .. } if v.ally => owed,
            _ => 0.0,
        }
    }

    /// Whether this strategy waits for its partner's broadcast.
    pub fn rushes(self, v: &View) -> bool {
        self.acts_as_defector(v)
    }

    /// Payoff broadcasts. `honest_value` is what an honest party in this
    /// seat would broadcast; `partner` is the partner's broadcast for
    /// strategies that rush.
    pub fn broadcasts(self, v: &View, honest_value: f64, interacted: bool, partner: &[f64]) -> Vec<f64> {
        if v.protocol == Protocol::Filter && v.role == 1 && self.is_honest() {
            return vec![];
        }
        if self.acts_as_defector(v) {
            return match partner {
                [b] => vec![*b],
                _ => vec![honest_value],
            };
        }
        match self {
            Strategy::Silent => vec![],
            Strategy::Misreporter { bias } if interacted => {
                vec![(honest_value + bias).clamp(-v.rho, v.rho)]
            }
            Strategy::Colluder { .. } if interacted => vec![v.rho],
            _ => vec![honest_value],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(own_raw: f64, beacon: bool) -> View {
        View {
            role: 0,
            own_raw,
            beacon,
            protocol: Protocol::Sym,
            rho: 4.0,
            ally: false,
        }
    }

    #[test]
    fn defector_refuses_to_give() {
        assert_eq!(Strategy::Defector.decisions(&view(-1.0, true)), vec![false]);
        assert_eq!(Strategy::Defector.decisions(&view(4.0, false)), vec![true]);
        assert_eq!(Strategy::Defector.broadcasts(&view(4.0, true), 4.0, true, &[-1.0]), vec![-1.0]);
        assert_eq!(Strategy::Defector.pays(&view(4.0, true), 2.5), 0.0);
    }

    #[test]
    fn honest_follows_the_beacon() {
        assert_eq!(Strategy::Honest.decisions(&view(-1.0, true)), vec![true]);
        assert_eq!(Strategy::Honest.decisions(&view(3.0, false)), vec![false]);
        let mut v = view(0.0, false);
        v.protocol = Protocol::Filter;
        v.role = 1;
        assert_eq!(Strategy::Honest.decisions(&v), vec![true]);
        assert!(Strategy::Honest.broadcasts(&v, 0.0, true, &[]).is_empty());
    }

    #[test]
    fn liars_shift_their_claims() {
        let v = view(1.0, true);
        assert_eq!(Strategy::Misreporter { bias: 0.5 }.messages(&v), vec![1.5]);
        assert_eq!(Strategy::Misreporter { bias: 0.5 }.broadcasts(&v, 1.0, true, &[]), vec![1.5]);
        assert_eq!(Strategy::Misreporter { bias: 0.5 }.broadcasts(&v, 0.0, false, &[]), vec![0.0]);
        assert_eq!(Strategy::Hoarder { understate: 2.0 }.messages(&v), vec![-1.0]);
        assert!(Strategy::Silent.messages(&v).is_empty());
        assert!(Strategy::Silent.broadcasts(&v, 1.0, true, &[]).is_empty());
    }

    #[test]
    fn colluders_inflate_with_allies_only() {
        let mut v = view(-1.0, true);
        v.ally = true;
        let c = Strategy::Colluder { group: 1 };
        assert_eq!(c.decisions(&v), vec![true]);
        assert_eq!(c.broadcasts(&v, -1.0, true, &[]), vec![4.0]);
        v.ally = false;
        assert_eq!(c.decisions(&v), vec![false]);
    }
}
