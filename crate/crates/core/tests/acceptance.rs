//! Acceptance suite. Prints one line per criterion; exits non-zero when a
//! criterion fails outside `EXPECTED_AT_DESK_SCALE`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use replab::experiments::{favor_run, random_feasible, smoothness_trials, tight_solver, Calibration, FavorCell, FavorRun};
use replab::lowerbound::{lower_bound_gap, pm1_planner_payoff};
use replab::metrics::regret_scaling_fit;
use replab::oll::{dim, objective_value, oll_solve, CumulativeGain, OllSolver, SolverSettings};
use replab::planner::{gain_matrix, update_matrix, witness_matrix, MAX_EPSILON};
use replab::reductions::{exante_symmetrize, transfer_symmetrize, PartnerMessage, Protocol, WealthLedger};
use replab::sim::{audit_exante, run_simulation, NatureConfig, SimConfig, Strategy, StrategyBlock};
use replab::stats::MeanStderr;

const LINEAR_IDENTITY_TOL: f64 = 1e-10;
const ZERO_GAIN_TOL: f64 = 1e-6;
const ORACLE_REL_TOL: f64 = 1e-4;
const SCALE_TOL: f64 = 1e-8;
const CONSERVATION_TOL: f64 = 1e-9;
const SLOPE_MAX: f64 = 0.85;
const PAYOFF_REL_TOL: f64 = 0.3;
const SIGMAS: f64 = 3.0;
const SIZE_SPREAD_MAX: f64 = 2.0;

/// Sub-criteria whose failure at desk-scale horizons is analysed rather
/// than treated as a regression.
const EXPECTED_AT_DESK_SCALE: &[&str] = &["5a", "5b"];

struct Outcome {
    parts: Vec<(&'static str, bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { parts: Vec::new() }
    }

    fn part(&mut self, id: &'static str, ok: bool, detail: String) {
        self.parts.push((id, ok, detail));
    }

    fn passed(&self) -> bool {
        self.parts.iter().all(|p| p.1)
    }

    fn blocking(&self) -> bool {
        self.parts.iter().any(|(id, ok, _)| !ok && !EXPECTED_AT_DESK_SCALE.contains(id))
    }
}

fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn identities() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..5);
        let eps: f64 = rng.gen_range(1e-4..MAX_EPSILON);
        let p_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(eps.sqrt()..=1.0));
        let x = random_feasible(&mut rng, n);
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let pay: f64 = rng.gen_range(-3.0..3.0);
        let s = p_mat[(a, b)];
        let lhs = pay * update_matrix(&p_mat, &x, eps)[(a, b)];
        let rhs = pay * s + 0.25 * gain_matrix(n, a, b, s, pay).inner(&x) + eps.sqrt() * pay * (1.0 - s);
        worst = worst.max((lhs - rhs).abs());
    }
    out.part("1.linear", worst <= LINEAR_IDENTITY_TOL, format!("linear identity max error {worst:.1e}"));

    let mut transfer_ok = true;
    let mut exante_ok = true;
    let mut ledger = WealthLedger::new(5, 0.3, 4.0).expect("valid ledger");
    for _ in 0..10_000 {
        let (p0, p1) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let a = transfer_symmetrize(p0, PartnerMessage::Valid(p1), 4.0);
        let b = transfer_symmetrize(p1, PartnerMessage::Valid(p0), 4.0);
        let (q0, q1) = (a.settle(b.tau_own), b.settle(a.tau_own));
        let mid = 0.5 * (p0 + p1);
        transfer_ok &= (q0 - mid).abs() <= 1e-12 && (q1 - mid).abs() <= 1e-12 && a.q == mid;
        let x0 = rng.gen_range(0..5);
        let x1 = (x0 + rng.gen_range(1..5)) % 5;
        let (w0, w1) = (ledger.balance(x0), ledger.balance(x1));
        let quote = exante_symmetrize(&mut ledger, x0, x1, [p0, p1].map(PartnerMessage::Valid)).expect("valid pair");
        exante_ok &= quote.q == Some((w0 * p0 + w1 * p1) / (w0 + w1)) && quote.tau[0] + quote.tau[1] == 0.0;
    }
    out.part("1.transfer", transfer_ok, "transfer q0 = q1 = mean".into());
    out.part("1.exante", exante_ok, "ex-ante q and tau antisymmetry".into());

    let mut witness_ok = true;
    for n in [2, 3, 5, 8] {
        let h: Vec<usize> = (0..n).step_by(2).collect();
        for side in [0, 1] {
            let w = witness_matrix(&h, side, n).expect("valid witness");
            let mut ev: Vec<f64> = SymmetricEigen::new(w).eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let top = ev.pop().unwrap_or(0.0);
            witness_ok &= (top - n as f64).abs() < 1e-9 && ev.iter().all(|v| v.abs() < 1e-9);
        }
    }
    out.part("1.witness", witness_ok, "witness rank one with eigenvalue N".into());
    out
}

#[derive(Deserialize)]
struct LearnerCase {
    cumulative: Vec<Vec<f64>>,
    epsilon: f64,
    objective: f64,
}

#[derive(Deserialize)]
struct Oracle {
    learner: Vec<LearnerCase>,
}

fn solver_checks() -> Outcome {
    let mut out = Outcome::new();
    let mut worst: f64 = 0.0;
    for n in [1, 2, 4] {
        let d = dim(n);
        let x = oll_solve(&CumulativeGain::new(n), 0.1).expect("zero gain solves").x;
        worst = worst.max((x - DMatrix::<f64>::identity(d, d)).amax());
    }
    out.part("2.zero", worst <= ZERO_GAIN_TOL, format!("zero gain |X - I| {worst:.1e}"));

    let oracle: Oracle = serde_json::from_str(include_str!("../fixtures/oll_oracle.json")).expect("fixture parses");
    let solver = OllSolver::new(SolverSettings::default());
    let mut worst_rel: f64 = 0.0;
    for case in &oracle.learner {
        let m = DMatrix::from_fn(6, 6, |i, j| case.cumulative[i][j]);
        let cum = CumulativeGain::from_matrix(m).expect("fixture matrix");
        let x = solver.solve(&cum, case.epsilon).expect("fixture solves").x;
        let f = objective_value(&x, &cum, case.epsilon).expect("finite objective");
        worst_rel = worst_rel.max((f - case.objective).abs() / case.objective.abs().max(1.0));
    }
    out.part(
        "2.oracle",
        oracle.learner.len() == 20 && worst_rel <= ORACLE_REL_TOL,
        format!("{} conic-oracle instances, max rel error {worst_rel:.1e}", oracle.learner.len()),
    );

    let tight = tight_solver();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut scale_err, mut bits_ok): (f64, bool) = (0.0, true);
    for _ in 0..10 {
        let d = dim(2);
        let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-5.0..5.0));
        let cum = CumulativeGain::from_matrix(m).expect("finite matrix");
        let eps = rng.gen_range(0.02..0.5);
        let c = rng.gen_range(0.1..10.0);
        let a = tight.solve(&cum, eps).expect("solves").x;
        let b = tight.solve(&cum.scaled(c), eps / c).expect("solves").x;
        scale_err = scale_err.max((&a - b).amax());
        let again = tight.solve(&cum, eps).expect("solves").x;
        bits_ok &= a.iter().zip(again.iter()).all(|(u, v)| u.to_bits() == v.to_bits());
    }
    out.part("2.scale", scale_err <= SCALE_TOL, format!("scale invariance {scale_err:.1e}"));
    out.part("2.determinism", bits_ok, "bit-exact repeat".into());
    out
}

fn smoothness(cal: &Calibration) -> Outcome {
    let mut out = Outcome::new();
    let seeds: Vec<u64> = (0..10).collect();
    let trials: Vec<_> = par_map(&seeds, |&s| smoothness_trials(s, 100, &[2, 4, 8]).expect("smoothness trials"))
        .into_iter()
        .flatten()
        .collect();
    let max = trials.iter().map(|t| t.ratio).fold(0.0, f64::max);
    let c_s = cal.smoothness.c_s;
    out.part(
        "3",
        trials.len() == 1000 && max <= c_s,
        format!("{} trials, max ratio {max:.3} vs C_s {c_s:.3}", trials.len()),
    );
    out
}

fn adversarial_exante(seed: u64) -> SimConfig {
    SimConfig {
        n_users: 6,
        n_rounds: 10_000,
        rho: 2.0,
        nature: NatureConfig::ExanteSymmetric { spread: 0.5, noise: 1.0 },
        strategies: vec![
            StrategyBlock { strategy: Strategy::Honest, count: 4 },
            StrategyBlock { strategy: Strategy::Hoarder { understate: 1.0 }, count: 1 },
            StrategyBlock { strategy: Strategy::Misreporter { bias: 1.0 }, count: 1 },
        ],
        honest_set: None,
        protocol: Protocol::ExAnte,
        seed,
        delta: Some(0.2),
        epsilon: Some(0.04),
        solver: SolverSettings::planner(),
        replicas: false,
    }
}

fn conservation() -> Outcome {
    let mut out = Outcome::new();
    let seeds = [0u64, 1];
    let audits = par_map(&seeds, |&s| {
        let cfg = adversarial_exante(s);
        let tr = run_simulation(&cfg).expect("simulation runs");
        audit_exante(&tr, &cfg.honest_users()).expect("audit runs")
    });
    let ok = audits.iter().all(|a| {
        a.max_conservation_error <= CONSERVATION_TOL
            && a.min_wealth > 0.0
            && a.max_relative_change <= 1.0 + 1e-12
            && a.potential_checks > 0
            && a.min_potential_slack >= -1e-9
            && a.min_set_slack >= -1e-9
    });
    let worst = |f: fn(&replab::sim::ExAnteAudit) -> f64| audits.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    out.part(
        "4",
        ok,
        format!(
            "{} runs of 10^4 rounds: sum w error {:.1e}, max |dw/w|/delta {:.3}, min potential slack {:.2e}, min set slack {:.3}",
            audits.len(),
            worst(|a| a.max_conservation_error),
            worst(|a| a.max_relative_change),
            -worst(|a| -a.min_potential_slack),
            -worst(|a| -a.min_set_slack),
        ),
    );
    out
}

fn regret_scaling(cal: &Calibration) -> Outcome {
    let mut out = Outcome::new();
    let seeds: Vec<u64> = (0..20).collect();
    let c = cal.regret_envelope.c;
    let mut slopes = Vec::new();
    let mut payoffs = Vec::new();
    let (mut slope_ok, mut payoff_ok, mut envelope_ok) = (true, true, true);
    let mut max_ratio: f64 = 0.0;
    for alpha in [0.5, 0.75] {
        let cell = FavorCell::standard(alpha);
        let runs: Vec<FavorRun> = par_map(&seeds, |&s| favor_run(&cell, s).expect("favor run"));
        let pts: Vec<(f64, f64)> = cell
            .horizons
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let v: Vec<f64> = runs.iter().map(|r| r.checkpoints[i].regret_per_user()).collect();
                (t as f64, MeanStderr::of(&v).mean)
            })
            .collect();
        let slope = regret_scaling_fit(&pts).expect("enough horizons").slope;
        slope_ok &= slope <= SLOPE_MAX;
        slopes.push(format!("a={alpha}: {slope:.3}"));

        let last = cell.horizons.len() - 1;
        let t = cell.horizons[last];
        let per_user: Vec<f64> = runs.iter().map(|r| r.checkpoints[last].p_h / r.checkpoints[last].h.len() as f64).collect();
        let mean = MeanStderr::of(&per_user).mean;
        let target = cell.target_payoff(t);
        let rel = (mean - target).abs() / target;
        payoff_ok &= mean > 0.0 && rel <= PAYOFF_REL_TOL;
        payoffs.push(format!("a={alpha}: {mean:.2} vs {target:.2}"));

        for r in &runs {
            for s in &r.subsets {
                max_ratio = max_ratio.max(s.ratio);
            }
            envelope_ok &= r.subsets.len() == cell.subsets * cell.horizons.len();
        }
    }
    envelope_ok &= max_ratio <= c;
    out.part("5a", slope_ok, format!("slopes {}", slopes.join(", ")));
    out.part("5b", payoff_ok, format!("payoff per honest user {}", payoffs.join(", ")));
    out.part("5c", envelope_ok, format!("max subset ratio {max_ratio:.4} vs c {c:.4}"));
    out
}

fn lower_bound(cal: &Calibration) -> Outcome {
    let mut out = Outcome::new();
    let seeds: Vec<u64> = (0..100).collect();
    let (lo, hi) = (cal.lower_bound.c_lo, cal.lower_bound.c_hi);
    let mut means = Vec::new();
    let (mut positive, mut window, mut h2_ok, mut planner_ok) = (true, true, true, true);
    let mut detail = Vec::new();
    for n in [8usize, 16, 32] {
        let t = 16 * n as u64;
        let g = lower_bound_gap(n, t, &seeds).expect("lower bound runs");
        let m = g.normalized.mean;
        positive &= m > SIGMAS * g.normalized.stderr;
        window &= (lo..=hi).contains(&m);
        h2_ok &= g.opt_h2.within_sigmas(0.0, SIGMAS);
        let pay = MeanStderr::of(&par_map(&seeds, |&s| pm1_planner_payoff(n, t, s).expect("planner run")));
        planner_ok &= pay.within_sigmas(0.0, SIGMAS);
        means.push(m);
        detail.push(format!(
            "N={n}: gap/sqrt(NT) {m:.3}, opt_H2 {:.1}+-{:.1}, p([N]) {:.1}+-{:.1}",
            g.opt_h2.mean, g.opt_h2.stderr, pay.mean, pay.stderr
        ));
    }
    let spread = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) / means.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = positive && window && h2_ok && planner_ok && spread <= SIZE_SPREAD_MAX;
    out.part("6", ok, format!("{}; spread {spread:.2}, window [{lo:.3}, {hi:.3}]", detail.join("; ")));
    out
}

fn synchrony() -> Outcome {
    let mut out = Outcome::new();
    let setups = [
        (Protocol::Sym, NatureConfig::SymmetricRandom { spread: 1.0, noise: 0.5 }),
        (
            Protocol::Filter,
            NatureConfig::Filtering {
                resources: vec![3, 4],
                spread: 1.0,
                noise: 0.5,
            },
        ),
    ];
    let results = par_map(&setups, |(protocol, nature)| {
        let cfg = SimConfig {
            n_users: 5,
            n_rounds: 10_000,
            rho: 2.0,
            nature: nature.clone(),
            strategies: vec![StrategyBlock { strategy: Strategy::Honest, count: 5 }],
            honest_set: None,
            protocol: *protocol,
            seed: 7,
            delta: None,
            epsilon: None,
            solver: SolverSettings::planner(),
            replicas: true,
        };
        match run_simulation(&cfg) {
            Ok(tr) => (tr.stats.violations == 0 && tr.rounds.len() == 10_000, format!("{}: {} violations", protocol.name(), tr.stats.violations)),
            Err(e) => (false, format!("{}: {e}", protocol.name())),
        }
    });
    let ok = results.iter().all(|r| r.0);
    let detail: Vec<String> = results.into_iter().map(|r| r.1).collect();
    out.part("7", ok, format!("10^4 rounds with replicas; {}", detail.join(", ")));
    out
}

fn main() -> ExitCode {
    let cal = match Calibration::frozen() {
        Ok(c) => c,
        Err(e) => {
            println!("calibration fixture unreadable: {e}");
            return ExitCode::FAILURE;
        }
    };
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Box::new(identities)),
        (2, Box::new(solver_checks)),
        (3, Box::new(|| smoothness(&cal))),
        (4, Box::new(conservation)),
        (5, Box::new(|| regret_scaling(&cal))),
        (6, Box::new(|| lower_bound(&cal))),
        (7, Box::new(synchrony)),
    ];
    let mut blocking = false;
    let mut passed = 0;
    for (id, run) in &criteria {
        let start = Instant::now();
        let o = run();
        blocking |= o.blocking();
        passed += usize::from(o.passed());
        let parts: Vec<String> = o
            .parts
            .iter()
            .map(|(pid, ok, d)| {
                let tag = if *ok {
                    "ok"
                } else if EXPECTED_AT_DESK_SCALE.contains(pid) {
                    "FAIL (expected at desk scale)"
                } else {
                    "FAIL"
                };
                format!("[{pid} {tag}] {d}")
            })
            .collect();
        println!(
            "criterion {id}: {} ({:.0}s) {}",
            if o.passed() { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            parts.join(" ")
        );
    }
    println!("{passed}/{} criteria passed", criteria.len());
    if blocking {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
