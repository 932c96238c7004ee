use super::agent::View;
use super::beacon::Beacon;
use super::config::{SimConfig, Strategy};
use super::nature::Nature;
use super::transcript::{RunStats, SimulationTranscript};
use crate::error::{Error, Result};
use crate::oll::OllSolver;
use crate::planner::{DoublingPlanner, PlannerState, UpdateReport};
use crate::reductions::{
    exante_symmetrize, filter_report, sym_report, transfer_symmetrize, Broadcasts, PartnerMessage,
    Protocol, Report, RoundFlags, RoundOutcome, WealthLedger,
};

/// Slack allowed on the conserved wealth total.
const WEALTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum ActivePlanner {
    Fixed(PlannerState),
    Doubling(DoublingPlanner),
}

impl ActivePlanner {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let solver = OllSolver::new(cfg.solver);
        Ok(match cfg.epsilon {
            Some(eps) => Self::Fixed(PlannerState::new(cfg.n_users, eps, cfg.rho, solver)?),
            None => Self::Doubling(DoublingPlanner::new(cfg.n_users, cfg.rho, solver)?),
        })
    }

    fn recommend(&self, a: usize, b: usize) -> Result<f64> {
        match self {
            Self::Fixed(p) => p.recommend(a, b),
            Self::Doubling(p) => p.recommend(a, b),
        }
    }

    fn update(&mut self, a: usize, b: usize, p: f64) -> Result<UpdateReport> {
        match self {
            Self::Fixed(s) => s.update(a, b, p),
            Self::Doubling(s) => s.update(a, b, p),
        }
    }

    fn epoch(&self) -> u32 {
        match self {
            Self::Fixed(_) => 0,
            Self::Doubling(p) => p.epoch(),
        }
    }

    fn state(&self) -> &PlannerState {
        match self {
            Self::Fixed(p) => p,
            Self::Doubling(p) => p.state(),
        }
    }
}

pub(crate) fn ledger_delta(cfg: &SimConfig, epoch: u32) -> f64 {
    match (cfg.delta, cfg.epsilon) {
        (Some(d), _) => d,
        (None, None) => WealthLedger::epoch_delta(cfg.n_users, epoch),
        (None, Some(_)) => {
            (cfg.n_users as f64 / cfg.n_rounds as f64).sqrt().min(crate::reductions::MAX_DELTA)
        }
    }
}

fn invariant(name: &'static str, round: u64, detail: String) -> Error {
    Error::Invariant {
        invariant: name,
        round,
        detail,
    }
}

fn public_report(protocol: Protocol, s: f64, beacon: bool, b: &Broadcasts, rho: f64) -> Option<Report> {
    match protocol {
        Protocol::Sym | Protocol::Transfer | Protocol::ExAnte => Some(sym_report(s, beacon, b, rho)),
        Protocol::Filter => Some(filter_report(s, beacon, b, rho)),
        Protocol::AlwaysInteract => None,
    }
}

fn single_valid(msgs: &[f64], rho: f64) -> Option<f64> {
    PartnerMessage::from_messages(msgs, rho).value()
}

/// Runs one simulation to completion.
///
/// Honest-side invariants (no violations between honest users, replica
/// agreement, wealth conservation and per-round bounds, identical
/// symmetric payoffs) are checked every round; a failure aborts with
/// [`Error::Invariant`].
pub fn run_simulation(cfg: &SimConfig) -> Result<SimulationTranscript> {
    cfg.validate()?;
    let n = cfg.n_users;
    let rho = cfg.rho;
    let protocol = cfg.protocol;
    let strategies = cfg.strategy_list();
    let nature = Nature::new(&cfg.nature, n, rho, cfg.seed);
    let beacon = Beacon::new(cfg.seed);

    let mut planner = if protocol.uses_planner() {
        Some(ActivePlanner::new(cfg)?)
    } else {
        None
    };
    let mut replicas: Vec<ActivePlanner> = match &planner {
        Some(p) if cfg.replicas => strategies
            .iter()
            .filter(|s| s.is_honest())
            .map(|_| p.clone())
            .collect(),
        _ => Vec::new(),
    };
    let mut ledger_epoch = 0;
    let mut ledger = if protocol == Protocol::ExAnte {
        Some(WealthLedger::new(n, ledger_delta(cfg, 0), rho)?)
    } else {
        None
    };

    let mut stats = RunStats::default();
    let mut per_user_payoff = vec![0.0; n];
    let mut rounds = Vec::with_capacity(cfg.n_rounds.min(1 << 24) as usize);

    for t in 0..cfg.n_rounds {
        let draw = nature.draw(t);
        let (x0, x1) = (draw.x0, draw.x1);
        let raw = [draw.p0, draw.p1];
        let epoch = planner.as_ref().map_or(0, |p| p.epoch());
        if let Some(l) = ledger.as_mut() {
            if cfg.delta.is_none() && epoch != ledger_epoch {
                *l = WealthLedger::new(n, ledger_delta(cfg, epoch), rho)?;
                ledger_epoch = epoch;
            }
        }

        let s = match &planner {
            Some(p) => p.recommend(x0, x1)?,
            None => 1.0,
        };
        let beacon_decision = planner.is_none() || beacon.decide(t, s);
        let strat = [strategies[x0], strategies[x1]];
        let ally = matches!(
            (strat[0], strat[1]),
            (Strategy::Colluder { group: g0 }, Strategy::Colluder { group: g1 }) if g0 == g1
        );
        let views = [0, 1].map(|role| View {
            role,
            own_raw: raw[role],
            beacon: beacon_decision,
            protocol,
            rho,
            ally,
        });

        let mut b = Broadcasts::default();
        for i in 0..2 {
            b.decisions[i] = strat[i].decisions(&views[i]);
        }
        let interacted = b.interacted();

        let mut flags = RoundFlags::default();
        let mut realized = [0.0; 2];
        let mut tau = [0.0; 2];
        let mut honest_value = [0.0; 2];
        let mut wealth_after = None;
        if interacted {
            realized = raw;
            honest_value = raw;
            match protocol {
                Protocol::Transfer => {
                    let msgs = [strat[0].messages(&views[0]), strat[1].messages(&views[1])];
                    let quotes = [0, 1].map(|i| {
                        let own = single_valid(&msgs[i], rho).unwrap_or(raw[i]);
                        transfer_symmetrize(own, PartnerMessage::from_messages(&msgs[1 - i], rho), rho)
                    });
                    let paid = [0, 1].map(|i| strat[i].pays(&views[i], quotes[i].tau_own));
                    for i in 0..2 {
                        realized[i] = raw[i] + paid[1 - i] - paid[i];
                        tau[i] = paid[i];
                        honest_value[i] = quotes[i].settle(paid[1 - i]);
                    }
                    flags.message_fallback = quotes.iter().any(|q| q.fallback);
                }
                Protocol::ExAnte => {
                    let l = ledger.as_mut().expect("ledger exists under ex-ante");
                    let msgs = [0, 1].map(|i| PartnerMessage::from_messages(&strat[i].messages(&views[i]), rho));
                    let quote = exante_symmetrize(l, x0, x1, msgs)?;
                    check_ledger(l, &quote.tau, &quote.wealth_before, t)?;
                    tau = quote.tau;
                    honest_value = [0, 1].map(|i| quote.q_for(raw[i]));
                    flags.message_fallback = quote.q.is_none();
                    wealth_after = Some([l.balance(x0), l.balance(x1)]);
                }
                _ => {}
            }
        }

        let order = if strat[0].rushes(&views[0]) && !strat[1].rushes(&views[1]) {
            [1, 0]
        } else {
            [0, 1]
        };
        for i in order {
            let partner = b.payoffs[1 - i].clone();
            b.payoffs[i] = strat[i].broadcasts(&views[i], honest_value[i], interacted, &partner);
        }

        let report = public_report(protocol, s, beacon_decision, &b, rho);
        if let Some(rep) = &report {
            flags.violation = rep.violation;
            if rep.violation.is_some() {
                stats.violations += 1;
            }
        }
        let both_honest = strat[0].is_honest() && strat[1].is_honest();
        if both_honest && flags.violation.is_some() {
            return Err(invariant(
                "honest-no-violation",
                t,
                format!("honest pair ({x0}, {x1}) reported {:?}", flags.violation),
            ));
        }
        if both_honest
            && interacted
            && matches!(protocol, Protocol::Transfer | Protocol::ExAnte)
            && honest_value[0] != honest_value[1]
        {
            return Err(invariant(
                "symmetrized-payoff-identity",
                t,
                format!("q0 = {} but q1 = {}", honest_value[0], honest_value[1]),
            ));
        }

        let reported = report.map_or(0.0, |r| r.p);
        if let Some(p) = planner.as_mut() {
            let up = p.update(x0, x1, reported)?;
            flags.clamped = up.clamped;
            flags.non_converged = up.non_converged;
            stats.solves += u64::from(up.solved);
            stats.solver_iterations += up.iterations as u64;
            stats.non_converged += u64::from(up.non_converged);
            stats.clamped += u64::from(up.clamped);
            for r in replicas.iter_mut() {
                let s_own = r.recommend(x0, x1)?;
                let own = public_report(protocol, s_own, beacon.decide(t, s_own), &b, rho)
                    .map_or(0.0, |r| r.p);
                r.update(x0, x1, own)?;
                if r != &*p {
                    return Err(invariant(
                        "sym-synchrony",
                        t,
                        "an honest planner replica diverged".into(),
                    ));
                }
            }
        }

        per_user_payoff[x0] += realized[0];
        per_user_payoff[x1] += realized[1];
        rounds.push(RoundOutcome {
            round: t,
            epoch,
            pair: (x0, x1),
            s,
            decisions: [0, 1].map(|i| b.decisions[i].first().copied()),
            interacted,
            raw,
            realized,
            broadcasts: [0, 1].map(|i| b.payoffs[i].first().copied()),
            reported,
            tau,
            q: honest_value,
            wealth_after,
            flags,
        });
    }

    Ok(SimulationTranscript {
        config: cfg.clone(),
        rounds,
        per_user_payoff,
        honest: cfg.honest_users(),
        stats,
        final_wealth: ledger.map(|l| l.balances().to_vec()),
        final_planner: planner.map(|p| p.state().clone()),
    })
}

fn check_ledger(l: &WealthLedger, tau: &[f64; 2], before: &[f64; 2], t: u64) -> Result<()> {
    let n = l.n_users() as f64;
    if (l.total() - n).abs() > WEALTH_TOL {
        return Err(invariant(
            "wealth-conservation",
            t,
            format!("total {} != {n}", l.total()),
        ));
    }
    for i in 0..2 {
        if tau[i].abs() > l.delta() * before[i] * (1.0 + 1e-12) {
            return Err(invariant(
                "wealth-relative-change",
                t,
                format!("|tau| = {} exceeds delta * w = {}", tau[i].abs(), l.delta() * before[i]),
            ));
        }
        if before[i] + tau[i] <= 0.0 {
            return Err(invariant("wealth-positive", t, "balance reached zero".into()));
        }
    }
    Ok(())
}
