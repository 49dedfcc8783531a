use proptest::prelude::*;
use qrwt::analysis::{geometric_tail, mean_absorption, moments, pgf_eval, waiting_pdf};
use qrwt::builders::*;
use qrwt::closed_forms::*;
use qrwt::lumping::{deterministic_lumped, doubling_lumped};
use qrwt::montecarlo::RunningStats;
use qrwt::{enumerate_full_states, validate_chain, AbsorbingChain, Cutoff, StateLabel};
use std::collections::HashSet;
use std::io::Cursor;

fn prob() -> impl Strategy<Value = f64> {
    0.05f64..=1.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn builders(p: f64, a: f64) -> Vec<AbsorbingChain> {
    vec![
        build_single_segment(p).unwrap(),
        build_fixed_scheme(&SchemeTree::balanced(3).unwrap(), p, a).unwrap(),
        build_fixed_scheme(&SchemeTree::right_comb(4).unwrap(), p, a).unwrap(),
        build_dynamical(4, p, a).unwrap(),
        build_deterministic(4, p).unwrap(),
        build_two_segment_cutoff(p, a, 4).unwrap(),
        build_finite_memory_deterministic(3, p, 3).unwrap(),
        build_cc_doubling(2, p, a, 1).unwrap(),
        doubling_lumped(3, p, a).unwrap(),
        deterministic_lumped(7, p).unwrap(),
    ]
}

/// Backward differences of the PGF at `t = 1`, fourth order in `h`.
fn pgf_derivatives_at_one(chain: &AbsorbingChain, h: f64) -> (f64, f64) {
    let g: Vec<f64> = (0..6).map(|i| pgf_eval(chain, 1.0 - i as f64 * h).unwrap()).collect();
    let d1 = (25.0 * g[0] - 48.0 * g[1] + 36.0 * g[2] - 16.0 * g[3] + 3.0 * g[4]) / (12.0 * h);
    let d2 = (45.0 * g[0] - 154.0 * g[1] + 214.0 * g[2] - 156.0 * g[3] + 61.0 * g[4] - 10.0 * g[5]) / (12.0 * h * h);
    (d1, d2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builders_are_valid_with_unique_labels(p in prob(), a in prob()) {
        for chain in builders(p, a) {
            prop_assert!(validate_chain(&chain).is_empty());
            let names: HashSet<String> = chain.labels().iter().map(|l| l.to_string()).collect();
            prop_assert_eq!(names.len(), chain.len());
        }
    }

    #[test]
    fn moments_are_consistent(p in prob(), a in prob()) {
        for chain in builders(p, a) {
            let (k, k2) = moments(&chain).unwrap();
            for (m, s) in k.iter().zip(&k2) {
                prop_assert!(*m >= 1.0 - 1e-12);
                prop_assert!(*s >= m * m * (1.0 - 1e-10));
            }
        }
    }

    #[test]
    fn pgf_bounds_and_derivatives(p in 0.2f64..=1.0, a in 0.2f64..=1.0) {
        let chain = build_dynamical(3, p, a).unwrap();
        let (k, k2) = moments(&chain).unwrap();
        let mut previous = 0.0;
        for t in [0.0, 0.2, 0.5, 0.8, 0.95] {
            let g = pgf_eval(&chain, t).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
            prop_assert!(g >= previous - 1e-15);
            previous = g;
        }
        prop_assert_eq!(pgf_eval(&chain, 1.0).unwrap(), 1.0);
        let (d1, d2) = pgf_derivatives_at_one(&chain, 0.01 / k[0]);
        prop_assert!(rel(d1, k[0]) < 1e-5);
        prop_assert!(rel(d2 + d1, k2[0]) < 1e-5);
    }

    #[test]
    fn dump_round_trip(p in prob(), a in prob()) {
        for chain in builders(p, a) {
            let mut buf = Vec::new();
            chain.write_dump(&mut buf).unwrap();
            let back = AbsorbingChain::read_dump(Cursor::new(buf)).unwrap();
            prop_assert_eq!(back.labels(), chain.labels());
            prop_assert_eq!(back.to_dense(), chain.to_dense());
        }
    }

    #[test]
    fn running_stats_merge(xs in prop::collection::vec(0.0f64..1e4, 2..200), split in 0usize..200) {
        let split = split % xs.len();
        let mut whole = RunningStats::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut left, mut right) = (RunningStats::default(), RunningStats::default());
        xs[..split].iter().for_each(|&x| left.push(x));
        xs[split..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        prop_assert_eq!(left.count, whole.count);
        prop_assert!((left.mean - whole.mean).abs() <= 1e-9 * whole.mean.abs().max(1.0));
        prop_assert!((left.m2 - whole.m2).abs() <= 1e-8 * whole.m2.abs().max(1.0));
    }

    #[test]
    fn cutoff_triangle(p in 0.02f64..=1.0, m in 1u32..60) {
        let k2 = k2_cutoff(p, 1.0, Cutoff::Finite(m)).unwrap();
        prop_assert!(rel(k2, kn_det_cutoff(p, 2, Cutoff::Finite(m)).unwrap()) < 1e-9);
        let q = 1.0 - p;
        let inf = k2_cutoff(p, 0.7, Cutoff::Unbounded).unwrap();
        prop_assert!(rel(inf, (1.0 + 2.0 * q) / (0.7 * p * (2.0 - p))) < 1e-12);
    }

    #[test]
    fn dynamical_not_slower_than_fixed(p in prob(), a in prob()) {
        let fixed = mean_absorption(&build_fixed_scheme(&SchemeTree::left_comb(3).unwrap(), p, a).unwrap()).unwrap()[0];
        let dynamical = mean_absorption(&build_dynamical(3, p, a).unwrap()).unwrap()[0];
        prop_assert!(dynamical <= fixed * (1.0 + 1e-12));
    }

    #[test]
    fn order_is_irrelevant_without_failures(p in prob()) {
        let s = build_single_segment(p).unwrap();
        let left = combine_fixed(&combine_fixed(&s, &s, 1.0).unwrap(), &s, 1.0).unwrap();
        let right = combine_fixed(&s, &combine_fixed(&s, &s, 1.0).unwrap(), 1.0).unwrap();
        let k = kn_det(p, 3).unwrap();
        for chain in [&left, &right, &build_dynamical(3, p, 1.0).unwrap(), &build_deterministic(3, p).unwrap()] {
            prop_assert!(rel(mean_absorption(chain).unwrap()[0], k) < 1e-10);
        }
        prop_assert!(rel(small_repeater_mean(SmallScheme::Fixed3, p, 1.0).unwrap(), k) < 1e-12);
        prop_assert!(rel(small_repeater_mean(SmallScheme::Dyn3, p, 1.0).unwrap(), k) < 1e-12);
    }

    #[test]
    fn comb_trees_are_equivalent(p in prob(), a in prob()) {
        let l = moments(&build_fixed_scheme(&SchemeTree::left_comb(3).unwrap(), p, a).unwrap()).unwrap();
        let r = moments(&build_fixed_scheme(&SchemeTree::right_comb(3).unwrap(), p, a).unwrap()).unwrap();
        prop_assert!(rel(l.0[0], r.0[0]) < 1e-12);
        prop_assert!(rel(l.1[0], r.1[0]) < 1e-12);
    }

    #[test]
    fn nested_doubling_schedule_is_positive(p in 0.001f64..=1.0, a in 0.01f64..=1.0, d in 1usize..8) {
        let k = nested_approx(&vec![2; d], p, a).unwrap();
        prop_assert!(k.is_finite() && k > 0.0);
    }
}

#[test]
fn full_state_counts_follow_recurrence() {
    let counts: Vec<usize> = (1..=12).map(|n| enumerate_full_states(n).unwrap().len()).collect();
    assert_eq!(&counts[..2], &[2, 5]);
    for w in counts.windows(3) {
        assert_eq!(w[2], 3 * w[1] - w[0]);
    }
    assert_eq!(counts[2], 13);
}

#[test]
fn labels_round_trip() {
    for n in 1..=6 {
        for label in enumerate_full_states(n).unwrap() {
            let text = label.to_string();
            assert!(text.is_ascii());
            assert_eq!(text.parse::<StateLabel>().unwrap(), label);
        }
    }
}

#[test]
fn variance_nonnegative_on_grid() {
    for i in 1..=10 {
        for j in 1..=10 {
            let (p, a) = (i as f64 / 10.0, j as f64 / 10.0);
            for chain in [build_dynamical(4, p, a).unwrap(), doubling_lumped(2, p, a).unwrap()] {
                let (k, k2) = moments(&chain).unwrap();
                assert!(k2[0] - k[0] * k[0] >= -1e-9 * k2[0]);
            }
        }
    }
}

#[test]
fn pdf_ratio_approaches_tail() {
    let chain = build_fixed_scheme(&SchemeTree::balanced(3).unwrap(), 0.4, 0.6).unwrap();
    let pdf = waiting_pdf(&chain, 1e-12).unwrap();
    let lambda = geometric_tail(&chain).unwrap().lambda;
    let n = pdf.len();
    assert!((pdf[n - 1].1 / pdf[n - 2].1 - lambda).abs() < 1e-6);
    let (m1, _) = moments(&chain).unwrap();
    let from_pdf: f64 = pdf.iter().map(|&(k, pk)| k as f64 * pk).sum();
    assert!(rel(from_pdf, m1[0]) < 1e-6);
}

#[test]
fn kn_det_cutoff_large_memory_limit() {
    for n in 2..=4 {
        for p in [0.05, 0.3, 0.8] {
            let big = kn_det_cutoff(p, n, Cutoff::Finite(10_000)).unwrap();
            assert!(rel(big, kn_det(p, n).unwrap()) < 1e-9);
        }
    }
}
