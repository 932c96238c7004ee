use replab::lowerbound::{
    build_h1, lower_bound_gap, lower_bound_run, pm1_opt, pm1_planner_payoff, pm1_rounds, Pm1Round,
};
use replab::stats::MeanStderr;

fn r(x0: usize, x1: usize, p: f64) -> Pm1Round {
    Pm1Round { x0, x1, p }
}

#[test]
fn greedy_partition_examples() {
    // Users 0..=2 seed H1 at N = 4; user 3 joins on a positive sum.
    let (h1, p) = build_h1(&[r(3, 0, 1.0), r(1, 3, 1.0), r(3, 2, -1.0)], 4).unwrap();
    assert_eq!(h1, vec![0, 1, 2, 3]);
    assert_eq!(p[3], 1.0);
    let (h1, p) = build_h1(&[r(3, 0, 1.0), r(3, 1, -1.0)], 4).unwrap();
    assert_eq!(h1, vec![0, 1, 2]);
    assert_eq!(p[3], 0.0);
    // At N = 6 user 5 only counts pairs with H1 members.
    let rounds = [r(4, 0, -1.0), r(5, 4, 1.0), r(5, 4, 1.0), r(5, 1, -1.0)];
    let (h1, p) = build_h1(&rounds, 6).unwrap();
    assert_eq!(h1, vec![0, 1, 2, 3]);
    assert_eq!((p[4], p[5]), (-1.0, -1.0));
    assert!(build_h1(&[r(0, 9, 1.0)], 4).is_err());
}

#[test]
fn opt_counts_both_parties() {
    let rounds = [r(0, 1, 1.0), r(1, 2, -1.0), r(0, 3, 1.0)];
    assert_eq!(pm1_opt(&rounds, &[0, 1], 4), 2.0);
    assert_eq!(pm1_opt(&rounds, &[0, 1, 2], 4), 0.0);
    assert_eq!(pm1_opt(&rounds, &[2, 3], 4), 0.0);
}

#[test]
fn runs_are_reproducible_and_partition_users() {
    let a = lower_bound_run(8, 128, 5).unwrap();
    assert_eq!(a, lower_bound_run(8, 128, 5).unwrap());
    let mut all = [a.h1.clone(), a.h2.clone()].concat();
    all.sort_unstable();
    assert_eq!(all, (0..8).collect::<Vec<_>>());
    assert_eq!(pm1_rounds(8, 128, 5).len(), 128);
    assert!(lower_bound_run(7, 128, 0).is_err());
    assert!(lower_bound_run(8, 4, 0).is_err());
}

#[test]
fn complement_gains_nothing_on_average() {
    let vals: Vec<f64> = (0..200).map(|s| lower_bound_run(16, 256, 3000 + s).unwrap().opt_h2).collect();
    let stat = MeanStderr::of(&vals);
    assert!(stat.within_sigmas(0.0, 3.0), "{stat:?}");
}

#[test]
fn gap_is_positive_and_scales_as_root_t() {
    let seeds: Vec<u64> = (500..700).collect();
    let small = lower_bound_gap(16, 512, &seeds).unwrap();
    let large = lower_bound_gap(16, 1024, &seeds).unwrap();
    assert!(small.gap.mean > 3.0 * small.gap.stderr);
    let ratio = large.gap.mean / small.gap.mean;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn undecided_users_join_half_the_time() {
    let n = 16;
    let (mut included, mut decided) = (0.0_f64, 0.0_f64);
    for seed in 0..300 {
        let run = lower_bound_run(n, 16 * n as u64, 40_000 + seed).unwrap();
        for (x, &p) in run.p_x.iter().enumerate().skip(n / 2 + 1) {
            if p != 0.0 {
                decided += 1.0;
                if run.h1.contains(&x) {
                    assert!(p > 0.0);
                    included += 1.0;
                }
            } else {
                assert!(!run.h1.contains(&x));
            }
        }
    }
    let f = included / decided;
    assert!((f - 0.5).abs() <= 3.0 * (0.25 / decided).sqrt(), "{f} of {decided}");
}

#[test]
fn planner_earns_nothing_on_average() {
    let vals: Vec<f64> = (0..30).map(|s| pm1_planner_payoff(6, 192, s).unwrap()).collect();
    let stat = MeanStderr::of(&vals);
    assert!(stat.within_sigmas(0.0, 3.0), "{stat:?}");
}
