use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replab::experiments::{random_feasible, slow_change_trials, Calibration};
use replab::oll::{OllSolver, SolverSettings};
use replab::planner::{
    epoch_epsilon, gain_matrix, steady_state, update_matrix, witness_matrix, DoublingPlanner, PlannerState,
    EPSILON_CAP, MAX_EPSILON,
};

/// Row of `(user, label)` with labels `-1, 0, +1` at offsets `0, 1, 2`.
fn at(user: usize, label: i32) -> usize {
    3 * user + (label + 1) as usize
}

/// Hand expansion of `p U(P, X)[a][b]` against the gain it induces.
fn identity_rhs(p_mat: &DMatrix<f64>, x: &DMatrix<f64>, eps: f64, a: usize, b: usize, pay: f64) -> f64 {
    let s = p_mat[(a, b)];
    let e_inner = (1.0 - s) * pay * x[(at(a, 0), at(b, 0))]
        - s * pay * x[(at(a, 0), at(b, 1))]
        - s * pay * x[(at(a, -1), at(b, 0))];
    pay * s + 0.25 * e_inner + eps.sqrt() * pay * (1.0 - s)
}

#[test]
fn linear_identity_over_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..5);
        let eps: f64 = rng.gen_range(1e-4..MAX_EPSILON);
        let p_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(eps.sqrt()..=1.0));
        let x = random_feasible(&mut rng, n);
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let pay: f64 = rng.gen_range(-3.0..3.0);
        let lhs = pay * update_matrix(&p_mat, &x, eps)[(a, b)];
        worst = worst.max((lhs - identity_rhs(&p_mat, &x, eps, a, b, pay)).abs());
        let s = p_mat[(a, b)];
        let via_gain = pay * s + 0.25 * gain_matrix(n, a, b, s, pay).inner(&x) + eps.sqrt() * pay * (1.0 - s);
        worst = worst.max((lhs - via_gain).abs());
    }
    assert!(worst <= 1e-10, "max error {worst:e}");
}

#[test]
fn gain_matrix_entries() {
    let g = gain_matrix(3, 0, 2, 0.25, 2.0).to_dense();
    assert_eq!(g[(at(0, 0), at(2, 0))], 1.5);
    assert_eq!(g[(at(0, 0), at(2, 1))], -0.5);
    assert_eq!(g[(at(0, -1), at(2, 0))], -0.5);
    assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 3);
    assert!(gain_matrix(3, 0, 2, 0.25, 0.0).is_zero());
}

#[test]
fn witness_inner_product_reads_the_planner_gain() {
    // <W_H, E> is the payoff kept inside H when (a, b) leave their labels.
    let w = witness_matrix(&[0, 1], 0, 3).unwrap();
    let s = 0.4;
    let inside = gain_matrix(3, 0, 1, s, 1.0).inner(&w);
    assert!((inside - (1.0 - s)).abs() < 1e-15);
    let crossing = gain_matrix(3, 0, 2, s, 1.0).inner(&w);
    assert!((crossing + s).abs() < 1e-15);
    let outside = gain_matrix(3, 2, 0, s, 1.0).inner(&w);
    assert_eq!(outside, 0.0);
}

#[test]
fn doubling_schedule_examples() {
    let eps = epoch_epsilon(8, 10);
    let expected = 4.0 * 2f64.powf(-20.0 / 3.0);
    assert!((eps - expected).abs() < 1e-15);
    assert!((eps - 0.0394).abs() < 1e-4);
    assert_eq!(epoch_epsilon(8, 0), EPSILON_CAP);
    assert_eq!(epoch_epsilon(1000, 3), EPSILON_CAP);
    for k in 1..30 {
        assert!(epoch_epsilon(16, k) <= epoch_epsilon(16, k - 1));
    }
}

#[test]
fn doubling_planner_restarts_at_powers_of_two() {
    let mut dp = DoublingPlanner::new(3, 1.0, OllSolver::new(SolverSettings::planner())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..40u64 {
        let a = rng.gen_range(0..3);
        let b = (a + 1) % 3;
        dp.update(a, b, rng.gen_range(-1.0..1.0)).unwrap();
        let next = t + 1;
        if next.is_power_of_two() && next >= 2 {
            assert_eq!(dp.state().round(), 0);
            assert_eq!(dp.state().p(), &DMatrix::from_element(3, 3, 1.0));
        }
    }
    assert_eq!(dp.epoch(), 5);
    assert_eq!(dp.state().epsilon(), epoch_epsilon(3, 5));
}

#[test]
fn transposed_pairs_mirror_the_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (n, rho) = (3, 2.0);
    let solver = OllSolver::new(SolverSettings::default());
    let mut fwd = PlannerState::new(n, 0.03, rho, solver.clone()).unwrap();
    let mut rev = PlannerState::new(n, 0.03, rho, solver).unwrap();
    let swap = |i: usize| match i % 3 {
        0 => i + 2,
        2 => i - 2,
        _ => i,
    };
    for _ in 0..40 {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let p = rng.gen_range(-rho..rho);
        fwd.update(a, b, p).unwrap();
        rev.update(b, a, p).unwrap();
        assert!((fwd.p().transpose() - rev.p()).amax() <= 1e-6);
        let x = fwd.x();
        let mirrored = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(swap(i), swap(j))]);
        assert!((mirrored - rev.x()).amax() <= 1e-5);
    }
}

#[test]
fn slow_change_within_frozen_constants() {
    let cal = Calibration::frozen().unwrap().slow_change;
    for t in slow_change_trials(31, 4).unwrap() {
        assert!(t.step_ratio <= cal.c_y_prime, "{t:?}");
        assert!(t.path_ratio <= cal.c_y, "{t:?}");
    }
}

fn drive(seed: u64, n: usize, eps: f64, rho: f64, rounds: usize, mut check: impl FnMut(&PlannerState, &PlannerState)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = PlannerState::new(n, eps, rho, OllSolver::new(SolverSettings::planner())).unwrap();
    for _ in 0..rounds {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let p = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0 * rho..2.0 * rho) };
        let before = st.clone();
        st.update(a, b, p).unwrap();
        check(&before, &st);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probabilities_stay_in_bounds(seed in any::<u64>(), eps in 1e-3f64..0.06, rho in 0.5f64..4.0) {
        let mut ok = true;
        drive(seed, 3, eps, rho, 40, |_, after| {
            let lo = after.epsilon().sqrt();
            ok &= after.p().iter().all(|&v| v >= lo - 1e-15 && v <= 1.0);
        });
        prop_assert!(ok);
    }

    #[test]
    fn update_is_a_convex_step_toward_steady_state(seed in any::<u64>(), eps in 1e-3f64..0.06) {
        let mut ok = true;
        drive(seed, 3, eps, 1.0, 40, |before, after| {
            let y = steady_state(&after.cut_join());
            for ((&p0, &p1), &y) in before.p().iter().zip(after.p().iter()).zip(y.iter()) {
                let (lo, hi) = if p0 < y { (p0, y) } else { (y, p0) };
                ok &= p1 >= lo - 1e-12 && p1 <= hi + 1e-12;
            }
        });
        prop_assert!(ok);
    }
}
