//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use qrwt::analysis::{
    edge_expected_counts, geometric_tail_from_pdf, mean_absorption, moments, pgf_eval, waiting_pdf,
};
use qrwt::builders::*;
use qrwt::closed_forms::*;
use qrwt::lumping::{cc_doubling_lumped, deterministic_lumped, doubling_lumped, doubling_lumped_size};
use qrwt::montecarlo::estimate;
use qrwt::{AbsorbingChain, Cutoff};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Instant, limit: Duration, what: &str) -> Result<Duration, String> {
    let e = t.elapsed();
    ensure(e <= limit, || format!("{what} took {e:.2?}, limit {limit:?}"))?;
    Ok(e)
}

fn random_points(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.random_range(0.01..=1.0), rng.random_range(0.01..=1.0)))
        .collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mean(chain: &AbsorbingChain) -> Result<f64, String> {
    Ok(mean_absorption(chain).map_err(err)?[0])
}

fn c1_cutoff_triangle() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let p = 0.05 + 0.1 * i as f64;
        for m in [1, 2, 5, 20, 10_000] {
            let a = k2_cutoff(p, 1.0, Cutoff::Finite(m)).map_err(err)?;
            let b = kn_det_cutoff(p, 2, Cutoff::Finite(m)).map_err(err)?;
            worst = worst.max(rel(a, b));
        }
        for n in 2..=4 {
            let a = kn_det_cutoff(p, n, Cutoff::Finite(10_000)).map_err(err)?;
            worst = worst.max(rel(a, kn_det(p, n).map_err(err)?));
        }
    }
    ensure(worst < 1e-9, || format!("max relative deviation {worst:e}"))?;
    let e = within(t, Duration::from_secs(1), "grid")?;
    Ok(format!("max rel dev {worst:.1e} in {e:.2?}"))
}

fn c2_solver_vs_closed_forms() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (p, a) in random_points(2, 50) {
        let k2 = mean(&build_fixed_scheme(&SchemeTree::balanced(2).map_err(err)?, p, a).map_err(err)?)?;
        let k3 = mean(&build_fixed_scheme(&SchemeTree::left_comb(3).map_err(err)?, p, a).map_err(err)?)?;
        let k4 = mean(&build_fixed_scheme(&SchemeTree::doubling(2).map_err(err)?, p, a).map_err(err)?)?;
        worst = worst
            .max(rel(k2, k2_cutoff(p, a, Cutoff::Unbounded).map_err(err)?))
            .max(rel(k3, small_repeater_mean(SmallScheme::Fixed3, p, a).map_err(err)?))
            .max(rel(k4, small_repeater_mean(SmallScheme::Doubling4, p, a).map_err(err)?));
    }
    ensure(worst < 1e-10, || format!("max relative deviation {worst:e}"))?;
    let e = within(t, Duration::from_secs(5), "50 points")?;
    Ok(format!("n=2,3,4 at 50 points, max rel dev {worst:.1e} in {e:.2?}"))
}

fn c3_deterministic() -> Outcome {
    let t = Instant::now();
    let (mut full, mut lumped): (f64, f64) = (0.0, 0.0);
    for p in [0.01, 0.05, 0.2, 0.5, 0.9, 1.0] {
        for n in 1..=10 {
            full = full.max(rel(mean(&build_deterministic(n, p).map_err(err)?)?, kn_det(p, n).map_err(err)?));
        }
        for n in 1..=64 {
            let m = mean(&deterministic_lumped(n, p).map_err(err)?)?;
            lumped = lumped.max(rel(m, kn_det(p, n).map_err(err)?));
        }
    }
    ensure(full < 1e-8 && lumped < 1e-8, || format!("full {full:e}, lumped {lumped:e}"))?;
    let e = within(t, Duration::from_secs(10), "family")?;
    Ok(format!("full n<=10 {full:.1e}, lumped n<=64 {lumped:.1e} in {e:.2?}"))
}

fn ptm3_dyn(p: f64, a: f64) -> Vec<Vec<f64>> {
    let q = 1.0 - p;
    let b = 1.0 - a;
    let (p2, p3, q2, q3) = (p * p, p * p * p, q * q, q * q * q);
    let a2 = a * a;
    vec![
        vec![
            q3 + 2.0 * b * p2 * q + a * b * p3,
            p * q2 + b * p3,
            p * q2,
            a * p2 * q,
            p * q2,
            p2 * q,
            a * p2 * q,
            a2 * p3,
        ],
        vec![b * p * q + a * b * p2, q2 + b * p2, 0.0, a * p * q, 0.0, p * q, 0.0, a2 * p2],
        vec![2.0 * b * p * q + a * b * p2, b * p2, q2, a * p * q, 0.0, 0.0, a * p * q, a2 * p2],
        vec![b * p, 0.0, 0.0, q, 0.0, 0.0, 0.0, a * p],
        vec![b * p * q + a * b * p2, b * p2, 0.0, 0.0, q2, p * q, a * p * q, a2 * p2],
        vec![a * b * p, b * p, 0.0, 0.0, 0.0, q, 0.0, a2 * p],
        vec![b * p, 0.0, 0.0, 0.0, 0.0, 0.0, q, a * p],
    ]
}

fn max_entry_diff(chain: &AbsorbingChain, expected: &[Vec<f64>]) -> Result<f64, String> {
    let dense = chain.to_dense();
    ensure(chain.n_transient() == expected.len(), || "transient count differs".into())?;
    let mut worst: f64 = 0.0;
    for (row, exp) in dense.iter().zip(expected) {
        ensure(row.len() == exp.len(), || "row length differs".into())?;
        for (x, y) in row.iter().zip(exp) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

fn c4_dynamical() -> Outcome {
    let (mut entries, mut means): (f64, f64) = (0.0, 0.0);
    for (p, a) in random_points(4, 20) {
        let chain = build_dynamical(3, p, a).map_err(err)?;
        entries = entries.max(max_entry_diff(&chain, &ptm3_dyn(p, a))?);
        means = means.max(rel(mean(&chain)?, small_repeater_mean(SmallScheme::Dyn3, p, a).map_err(err)?));
    }
    ensure(entries < 1e-14, || format!("matrix entry deviation {entries:e}"))?;
    ensure(means < 1e-10, || format!("mean deviation {means:e}"))?;
    let (p, a) = (1e-4, 1e-4);
    let dynamical = mean(&build_dynamical(3, p, a).map_err(err)?)?;
    let fixed = mean(&build_fixed_scheme(&SchemeTree::left_comb(3).map_err(err)?, p, a).map_err(err)?)?;
    let ratio = dynamical / fixed;
    ensure((ratio - 11.0 / 15.0).abs() < 1e-3, || format!("ratio {ratio} vs 11/15"))?;
    Ok(format!("entries {entries:.1e}, mean {means:.1e}, small-p ratio {ratio:.5}"))
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn c5_lumping() -> Outcome {
    let mut worst: f64 = 0.0;
    for (p, a) in random_points(5, 10) {
        for d in 1..=3 {
            let full = mean(&build_fixed_scheme(&SchemeTree::doubling(d).map_err(err)?, p, a).map_err(err)?)?;
            worst = worst.max(rel(mean(&doubling_lumped(d, p, a).map_err(err)?)?, full));
        }
    }
    ensure(worst < 1e-10, || format!("lumped vs unlumped {worst:e}"))?;
    let t = Instant::now();
    let mut sizes = Vec::new();
    for d in 1..=4 {
        let chain = doubling_lumped(d, 0.5, 0.5).map_err(err)?;
        mean(&chain)?;
        sizes.push(chain.len() as u128);
    }
    let small = within(t, Duration::from_secs(5), "d<=4")?;
    let t = Instant::now();
    let top = doubling_lumped(5, 0.5, 0.5).map_err(err)?;
    let k = mean(&top)?;
    let big = within(t, Duration::from_secs(30 * 60), "d=5")?;
    sizes.push(top.len() as u128);
    ensure(sizes == [3, 6, 21, 231, 26796], || format!("state counts {sizes:?}"))?;
    ensure(doubling_lumped_size(5) == 26796, || "size formula".into())?;
    ensure(k.is_finite() && k > 0.0, || format!("d=5 mean {k}"))?;
    let rss = peak_rss_bytes();
    if let Some(b) = rss {
        ensure(b <= 8 << 30, || format!("peak memory {b} bytes"))?;
    }
    let mem = rss.map_or("unknown".into(), |b| format!("{:.0} MiB", b as f64 / (1 << 20) as f64));
    Ok(format!(
        "counts {sizes:?}, d<=4 in {small:.2?}, d=5 mean {k:.3} in {big:.2?}, peak memory {mem}"
    ))
}

fn p2_cc(p: f64, a: f64) -> Vec<Vec<f64>> {
    let q = 1.0 - p;
    vec![
        vec![q * q, p * q, p * q, (1.0 - a) * p * p, a * p * p],
        vec![0.0, q, 0.0, (1.0 - a) * p, a * p],
        vec![0.0, 0.0, q, (1.0 - a) * p, a * p],
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
    ]
}

fn cc_ratio(d: u32, p: f64, a: f64) -> Result<f64, String> {
    Ok(mean(&cc_doubling_lumped(d, p, a, 1).map_err(err)?)? / mean(&doubling_lumped(d, p, a).map_err(err)?)?)
}

fn c6_announcement_delay() -> Outcome {
    let mut entries: f64 = 0.0;
    for (p, a) in random_points(6, 20) {
        let chain = double_with_cc(&build_single_segment(p).map_err(err)?, a, 1).map_err(err)?;
        entries = entries.max(max_entry_diff(&chain, &p2_cc(p, a))?);
    }
    ensure(entries < 1e-14, || format!("matrix entry deviation {entries:e}"))?;
    let ps: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    let (mut max8, mut max4): (f64, f64) = (1.0, 1.0);
    for j in 1..=10 {
        let a = j as f64 / 10.0;
        let mut previous = 0.0;
        for &p in &ps {
            let r = cc_ratio(3, p, a)?;
            ensure(r >= 1.0 - 1e-12, || format!("n=8 ratio {r} < 1 at p={p} a={a}"))?;
            ensure(r >= previous - 1e-12, || format!("n=8 ratio decreases at p={p} a={a}"))?;
            previous = r;
            max8 = max8.max(r);
            max4 = max4.max(cc_ratio(2, p, a)?);
        }
    }
    ensure(max8 > max4, || format!("max ratio n=8 {max8} not above n=4 {max4}"))?;
    Ok(format!("entries {entries:.1e}, max ratio n=4 {max4:.4}, n=8 {max8:.4}"))
}

fn c7_finite_memory() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.05, 0.3, 0.6, 1.0] {
        for a in [0.1, 0.5, 1.0] {
            for m in 1..=50 {
                let k = mean(&build_two_segment_cutoff(p, a, m).map_err(err)?)?;
                worst = worst.max(rel(k, k2_cutoff(p, a, Cutoff::Finite(m)).map_err(err)?));
            }
        }
        for n in 2..=3 {
            for m in 1..=10 {
                let chain = build_finite_memory_deterministic(n, p, m).map_err(err)?;
                worst = worst.max(rel(mean(&chain)?, kn_det_cutoff(p, n, Cutoff::Finite(m)).map_err(err)?));
                let (total, _, _) = finite_memory_counts(n, m).ok_or("count overflow")?;
                let expected = (m as u128 + 1).pow(n as u32) - (m as u128 - 1).pow(n as u32);
                ensure(total == expected && chain.len() as u128 == total, || {
                    format!("n={n} m={m}: {} states, expected {expected}", chain.len())
                })?;
            }
        }
    }
    ensure(worst < 1e-10, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("max rel dev {worst:.1e}, state counts match"))
}

fn c8_distribution() -> Outcome {
    let (mut mass_gap, mut moment, mut ratio): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (p, a) in [(0.3, 0.5), (0.6, 0.8), (0.2, 0.9)] {
        let chains = [
            build_dynamical(4, p, a).map_err(err)?,
            build_fixed_scheme(&SchemeTree::balanced(5).map_err(err)?, p, a).map_err(err)?,
            doubling_lumped(3, p, a).map_err(err)?,
        ];
        for chain in &chains {
            let pdf = waiting_pdf(chain, 1e-10).map_err(err)?;
            let mass: f64 = pdf.iter().map(|x| x.1).sum();
            mass_gap = mass_gap.max(1.0 - mass);
            let (m1, m2) = pdf.iter().fold((0.0, 0.0), |(s1, s2), &(k, pk)| {
                let k = k as f64;
                (s1 + k * pk, s2 + k * k * pk)
            });
            let (k, k2) = moments(chain).map_err(err)?;
            moment = moment.max(rel(m1, k[0])).max(rel(m2, k2[0]));
            let tail = geometric_tail_from_pdf(chain, &pdf).map_err(err)?;
            let n = pdf.len();
            ratio = ratio.max((pdf[n - 1].1 / pdf[n - 2].1 - tail.lambda).abs());
        }
    }
    ensure(mass_gap <= 1e-9, || format!("missing mass {mass_gap:e}"))?;
    ensure(moment < 1e-6, || format!("moment deviation {moment:e}"))?;
    ensure(ratio < 1e-6, || format!("tail ratio deviation {ratio:e}"))?;
    let mut geometric: f64 = 0.0;
    for n in 1..=5 {
        for p in [0.1, 0.4, 0.7] {
            let chain = build_deterministic(n, p).map_err(err)?;
            let pdf = waiting_pdf(&chain, 1e-10).map_err(err)?;
            let tail = geometric_tail_from_pdf(&chain, &pdf).map_err(err)?;
            geometric = geometric.max((tail.lambda - (1.0 - p)).abs()).max(rel(tail.c1, n as f64 * p));
        }
    }
    ensure(geometric < 1e-6, || format!("a=1 tail deviation {geometric:e}"))?;
    Ok(format!(
        "mass gap {mass_gap:.1e}, moments {moment:.1e}, ratio {ratio:.1e}, a=1 tail {geometric:.1e}"
    ))
}

/// Backward differences of the PGF at `t = 1`, fourth order in `h`.
fn pgf_derivatives_at_one(chain: &AbsorbingChain, h: f64) -> Result<(f64, f64), String> {
    let g = (0..6)
        .map(|i| pgf_eval(chain, 1.0 - i as f64 * h))
        .collect::<qrwt::Result<Vec<f64>>>()
        .map_err(err)?;
    let d1 = (25.0 * g[0] - 48.0 * g[1] + 36.0 * g[2] - 16.0 * g[3] + 3.0 * g[4]) / (12.0 * h);
    let d2 = (45.0 * g[0] - 154.0 * g[1] + 214.0 * g[2] - 156.0 * g[3] + 61.0 * g[4] - 10.0 * g[5]) / (12.0 * h * h);
    Ok((d1, d2))
}

fn c9_generating_functions() -> Outcome {
    let (mut pgf, mut fd, mut edges): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (p, a) in random_points(9, 10) {
        let chain = build_fixed_scheme(&SchemeTree::balanced(2).map_err(err)?, p, a).map_err(err)?;
        for t in [0.1, 0.5, 0.9] {
            let g = pgf_eval(&chain, t).map_err(err)?;
            pgf = pgf.max((g - two_segment_pgf(p, a, t).map_err(err)?).abs());
        }
        let (k, k2) = moments(&chain).map_err(err)?;
        let (d1, d2) = pgf_derivatives_at_one(&chain, 0.01 / k[0])?;
        fd = fd.max(rel(d1, k[0])).max(rel(d2 + d1, k2[0]));
        let restart = build_two_segment_restart(p, a).map_err(err)?;
        let l = edge_expected_counts(&restart.chain, &restart.restart_marks()).map_err(err)?;
        edges = edges.max((l - (1.0 - a) / a).abs());
        let (tau, tau_prime) = (1.0, 3.5);
        let total = edge_expected_counts(&restart.chain, &restart.time_marks(tau, tau_prime).map_err(err)?)
            .map_err(err)?;
        let expected = k[0] * tau + (1.0 - a) / a * tau_prime;
        edges = edges.max((total - expected).abs() / expected);
    }
    ensure(pgf < 1e-10, || format!("pgf deviation {pgf:e}"))?;
    ensure(fd < 1e-5, || format!("finite-difference deviation {fd:e}"))?;
    ensure(edges < 1e-12, || format!("edge count deviation {edges:e}"))?;
    Ok(format!("pgf {pgf:.1e}, derivatives {fd:.1e}, edge counts {edges:.1e}"))
}

fn c10_monte_carlo() -> Outcome {
    let t = Instant::now();
    let grid = [0.3, 0.5, 0.8];
    let (mut worst, mut worst_kl): (f64, f64) = (0.0, 0.0);
    for d in 1..=4 {
        for &p in &grid {
            for &a in &grid {
                let exact = mean(&doubling_lumped(d, p, a).map_err(err)?)?;
                let est = estimate(d, p, a, false, 1_000_000, 2024).map_err(err)?;
                let z = (est.mean - exact) / est.std_error;
                ensure(z.abs() < 4.0, || format!("d={d} p={p} a={a}: z={z:.2}"))?;
                worst = worst.max(z.abs());
                if d == 1 {
                    let kl = est.steps_times_restarts;
                    let z = (kl.mean - two_segment_mean_kl(p, a).map_err(err)?) / kl.std_error();
                    ensure(z.abs() < 4.0, || format!("E[KL] at p={p} a={a}: z={z:.2}"))?;
                    worst_kl = worst_kl.max(z.abs());
                }
            }
        }
    }
    let e = within(t, Duration::from_secs(120), "36 runs of 10^6 trials")?;
    Ok(format!("36 configs, worst |z| {worst:.2}, E[KL] worst |z| {worst_kl:.2}, in {e:.1?}"))
}

fn c11_approximations() -> Outcome {
    let mut margin = f64::INFINITY;
    for l0 in [10.0, 22.0, 50.0, 100.0] {
        let p = p_from_length(l0).map_err(err)?;
        for i in 1..=20 {
            let a = i as f64 / 21.0;
            let exact = mean(&doubling_lumped(4, p, a).map_err(err)?)?;
            let fine = relative_error(nested_approx(&[2, 2, 2, 2], p, a).map_err(err)?, exact).map_err(err)?;
            let coarse = relative_error(nested_approx(&[8, 2], p, a).map_err(err)?, exact).map_err(err)?;
            ensure(fine >= coarse, || format!("L0={l0} a={a:.3}: [2,2,2,2] {fine:.3}% < [8,2] {coarse:.3}%"))?;
            margin = margin.min(fine - coarse);
        }
    }
    let exact = mean(&doubling_lumped(4, 1.0, 1.0).map_err(err)?)?;
    let approx = approx_doubling(1.0, 1.0, 4).map_err(err)?;
    let e = relative_error(approx, exact).map_err(err)?;
    ensure(e > 400.0, || format!("closed-form estimate error {e:.2}% at p=a=1"))?;
    Ok(format!("ordering holds on 80 points (min gap {margin:.3} pts), estimate {approx} vs {exact}: {e:.2}%"))
}

fn c12_spread() -> Outcome {
    let mut single: f64 = 0.0;
    for p in [0.01, 0.1, 0.5, 0.9] {
        let (k, k2) = moments(&build_single_segment(p).map_err(err)?).map_err(err)?;
        single = single.max(((k2[0] - k[0] * k[0]).sqrt() / k[0] - (1.0 - p).sqrt()).abs());
    }
    ensure(single < 1e-12, || format!("single segment deviation {single:e}"))?;
    let mut limit: f64 = 0.0;
    for a in [0.1, 0.5, 0.9, 1.0] {
        let chain = build_fixed_scheme(&SchemeTree::balanced(2).map_err(err)?, 1e-6, a).map_err(err)?;
        let (k, k2) = moments(&chain).map_err(err)?;
        let ratio = (k2[0] - k[0] * k[0]).sqrt() / k[0];
        limit = limit.max((ratio - two_segment_ratio_limit(a).map_err(err)?).abs());
        limit = limit.max((ratio - (1.0 - 4.0 * a / 9.0).sqrt()).abs());
    }
    ensure(limit < 1e-3, || format!("small-p ratio deviation {limit:e}"))?;
    Ok(format!("sqrt(q) to {single:.1e}, small-p limit to {limit:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("cutoff consistency triangle", c1_cutoff_triangle),
        ("solver vs closed-form means", c2_solver_vs_closed_forms),
        ("deterministic family", c3_deterministic),
        ("dynamical scheme conformance", c4_dynamical),
        ("lumping exactness and scale", c5_lumping),
        ("classical communication delay", c6_announcement_delay),
        ("finite memory", c7_finite_memory),
        ("distribution properties", c8_distribution),
        ("generating functions and edge counts", c9_generating_functions),
        ("Monte Carlo agreement", c10_monte_carlo),
        ("approximation quality", c11_approximations),
        ("statistical spread", c12_spread),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
