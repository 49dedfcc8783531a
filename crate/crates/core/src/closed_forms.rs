//! Explicit formulas for waiting times and the approximations built on them.

use crate::analysis::mean_absorption;
use crate::chain::Cutoff;
use crate::error::{check_probability, out_of_range, Error, Result};
use crate::lumping::doubling_lumped;

pub const EULER_GAMMA: f64 = 0.577215664901533;

/// Size and probability regime where the alternating binomial sum loses
/// too many digits.
const STABLE_MIN_N: usize = 12;
const STABLE_MIN_P: f64 = 0.02;

pub const MAX_ASYMMETRIC_SEGMENTS: usize = 25;

/// `1 - q^k` without cancellation for small `p`.
fn one_minus_q_pow(p: f64, k: f64) -> f64 {
    if p == 1.0 {
        return 1.0;
    }
    -(k * (-p).ln_1p()).exp_m1()
}

fn q_pow(p: f64, k: f64) -> f64 {
    if p == 1.0 {
        return if k == 0.0 { 1.0 } else { 0.0 };
    }
    (k * (-p).ln_1p()).exp()
}

/// `1 - (1 - x)^n` for `x` in `[0, 1]`.
fn complement_pow(x: f64, n: usize) -> f64 {
    if x >= 1.0 {
        return 1.0;
    }
    -(n as f64 * (-x).ln_1p()).exp_m1()
}

/// Neumaier summation of a term sequence.
fn compensated<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Mean waiting time of two segments with swap probability `a` and memory
/// cutoff `m`.
pub fn k2_cutoff(p: f64, a: f64, m: Cutoff) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    let q = 1.0 - p;
    match m {
        Cutoff::Unbounded => Ok((1.0 + 2.0 * q) / (a * p * (2.0 - p))),
        Cutoff::Finite(0) => Err(out_of_range("m", 0, "cutoff must be at least 1")),
        Cutoff::Finite(m) => {
            let m = m as f64;
            // 1 + q - 2q^(m+1) = (1 - q^(m+1)) + q (1 - q^m)
            let head = one_minus_q_pow(p, m + 1.0);
            let den = head + q * one_minus_q_pow(p, m);
            let num = den + q;
            Ok(num / (a * p * den))
        }
    }
}

/// Mean waiting time of `n` segments with deterministic swapping.
pub fn kn_det(p: f64, n: usize) -> Result<f64> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(out_of_range("n", n, "must be at least 1"));
    }
    if n > STABLE_MIN_N || p < STABLE_MIN_P {
        Ok(kn_det_survival(p, n))
    } else {
        Ok(kn_det_alternating(p, n))
    }
}

/// `Σ_{j=1}^{n} (-1)^{j+1} C(n,j) / (1 - q^j)`.
fn kn_det_alternating(p: f64, n: usize) -> f64 {
    let mut binom = 1.0;
    compensated((1..=n).map(|j| {
        binom *= (n - j + 1) as f64 / j as f64;
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        sign * binom / one_minus_q_pow(p, j as f64)
    }))
}

/// `Σ_{k≥0} P(K > k) = Σ_{k≥0} (1 - (1 - q^k)^n)`.
fn kn_det_survival(p: f64, n: usize) -> f64 {
    if p == 1.0 {
        return 1.0;
    }
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    let mut k = 0.0;
    loop {
        let term = complement_pow(q_pow(p, k), n);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            carry += (sum - t) + term;
        } else {
            carry += (term - t) + sum;
        }
        sum = t;
        // Remaining terms are bounded by a geometric series of ratio q.
        if term / p < 1e-17 * sum {
            return sum + carry;
        }
        k += 1.0;
    }
}

/// Mean waiting time of `n` segments with deterministic swapping and
/// memory cutoff `m`.
pub fn kn_det_cutoff(p: f64, n: usize, m: Cutoff) -> Result<f64> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(out_of_range("n", n, "must be at least 1"));
    }
    let m = match m {
        Cutoff::Unbounded => return kn_det(p, n),
        Cutoff::Finite(0) => return Err(out_of_range("m", 0, "cutoff must be at least 1")),
        Cutoff::Finite(m) => m,
    };
    let q = 1.0 - p;
    let mf = m as f64;
    // m - Σ_{i=1}^{m-1} (1-q^i)^n = 1 + Σ_{i=1}^{m-1} (1 - (1-q^i)^n)
    let mut tail_terms = Vec::new();
    for i in 1..m {
        let term = complement_pow(q_pow(p, i as f64), n);
        if term == 0.0 {
            break;
        }
        tail_terms.push(term);
    }
    let bracket = 1.0 + compensated(tail_terms.into_iter().rev());
    let waiting = complement_pow(q_pow(p, mf), n);
    let num = waiting + one_minus_q_pow(p, n as f64) * bracket;
    let n = n as i32;
    let den = one_minus_q_pow(p, mf + 1.0).powi(n) - q.powi(n) * one_minus_q_pow(p, mf).powi(n);
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallScheme {
    Fixed3,
    Dyn3,
    Doubling4,
}

/// Printed rational functions for three and four segments.
pub fn small_repeater_mean(scheme: SmallScheme, p: f64, a: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    let a2 = a * a;
    let value = match scheme {
        SmallScheme::Fixed3 => {
            let num = a2 * poly(p, &[4.0, -10.0, 10.0, -5.0, 1.0])
                + a * poly(p, &[6.0, -16.0, 17.0, -9.0, 2.0])
                + poly(p, &[12.0, -23.0, 16.0, -4.0]);
            let den = a2 * p * (2.0 - p) * (a * poly(p, &[2.0, -4.0, 3.0, -1.0]) + poly(p, &[4.0, -5.0, 2.0]));
            num / den
        }
        SmallScheme::Dyn3 => {
            let num = a2 * poly(p, &[2.0, -5.0, 6.0, -4.0, 1.0])
                + a * poly(p, &[9.0, -22.0, 21.0, -10.0, 2.0])
                + poly(p, &[11.0, -22.0, 16.0, -4.0]);
            let den = a2 * p * (2.0 - p) * (a * poly(p, &[1.0, -2.0, 2.0, -1.0]) + poly(p, &[5.0, -7.0, 3.0]));
            num / den
        }
        SmallScheme::Doubling4 => {
            let p4 = p.powi(4);
            let num = 2.0 * a2 * p4 * (p - 1.0) * (2.0 * p - 3.0)
                - a * poly(p, &[4.0, 10.0, -53.0, 93.0, -72.0, 20.0])
                + 3.0 * (3.0 - 2.0 * p).powi(2) * poly(p, &[2.0, -3.0, 2.0]);
            let den = a2
                * p
                * (2.0 - p)
                * (a * p * p - (a + 2.0) * p + 3.0)
                * (-a * p.powi(3) + poly(p, &[4.0, -6.0, 4.0]));
            num / den
        }
    };
    Ok(value)
}

/// Horner evaluation, coefficients from the constant term up.
fn poly(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Mean waiting time from the state where the segments in `ready` are
/// already distributed, segments having their own probabilities.
pub fn asymmetric_mean(ready: &[usize], p_list: &[f64]) -> Result<f64> {
    let n = p_list.len();
    if n == 0 {
        return Err(out_of_range("p_list", 0, "needs at least one segment"));
    }
    if n > MAX_ASYMMETRIC_SEGMENTS {
        return Err(out_of_range(
            "p_list",
            n,
            "at most 25 segments (the sum runs over all subsets)",
        ));
    }
    for &p in p_list {
        check_probability("p_list", p)?;
    }
    let mut ready_mask = 0u32;
    for &i in ready {
        if i >= n {
            return Err(out_of_range("ready", i, "segment index out of range"));
        }
        ready_mask |= 1 << i;
    }
    let free: Vec<f64> = (0..n)
        .filter(|i| ready_mask >> i & 1 == 0)
        .map(|i| (-p_list[i]).ln_1p())
        .collect();
    if free.is_empty() {
        return Ok(0.0);
    }
    let terms = (1u32..1 << free.len()).map(|sub| {
        let ln_q: f64 = (0..free.len()).filter(|b| sub >> b & 1 == 1).map(|b| free[b]).sum();
        let sign = if sub.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        sign / -ln_q.exp_m1()
    });
    Ok(compensated(terms))
}

/// The common estimate `(3 / (2a))^d / p` for a doubling repeater of
/// `2^d` segments.
pub fn approx_doubling(p: f64, a: f64, d: u32) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    Ok((1.5 / a).powi(d as i32) / p)
}

/// `(γ + ln n + 1/(2n)) / p`, the harmonic-number estimate for
/// deterministic swapping.
pub fn harmonic_approx(p: f64, n: usize) -> Result<f64> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(out_of_range("n", n, "must be at least 1"));
    }
    let n = n as f64;
    Ok((EULER_GAMMA + n.ln() + 0.5 / n) / p)
}

/// Exact mean of a doubling repeater with `factor` segments, from the
/// lumped chain.
pub fn doubling_mean(factor: u32, p: f64, a: f64) -> Result<f64> {
    if factor == 1 {
        check_probability("p", p)?;
        return Ok(1.0 / p);
    }
    if !factor.is_power_of_two() || factor > 32 {
        return Err(Error::Unsupported(format!(
            "no exact backend for {factor} segments; factors must be 2, 4, 8, 16 or 32"
        )));
    }
    let chain = doubling_lumped(factor.trailing_zeros(), p, a)?;
    Ok(mean_absorption(&chain)?[0])
}

/// Nested estimate for `Π schedule` segments. The first factor is
/// innermost and uses the exact mean at `(p, a)`; every further factor
/// treats the previous level as one segment with probability `1 / mean`.
pub fn nested_approx(schedule: &[u32], p: f64, a: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    if schedule.is_empty() {
        return Err(out_of_range("schedule", "[]", "needs at least one factor"));
    }
    let mut eff = p;
    let mut mean = 1.0 / p;
    for &f in schedule {
        if !matches!(f, 2 | 4 | 8 | 16 | 32) {
            return Err(Error::Unsupported(format!(
                "no exact backend for factor {f}; factors must be 2, 4, 8, 16 or 32"
            )));
        }
        mean = doubling_mean(f, eff, a)?;
        eff = 1.0 / mean;
    }
    Ok(mean)
}

/// Parse a schedule written as `2|8` or `2,8`.
pub fn parse_schedule(s: &str) -> Result<Vec<u32>> {
    s.split(['|', ','])
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse(format!("bad schedule factor {t:?} in {s:?}")))
        })
        .collect()
}

/// `100 |approx / exact - 1|`.
pub fn relative_error(approx: f64, exact: f64) -> Result<f64> {
    if exact.is_nan() || exact <= 0.0 {
        return Err(out_of_range("exact", exact, "must be positive"));
    }
    Ok(100.0 * (approx / exact - 1.0).abs())
}

/// Mean from each transient state of the two-segment chain, in the order
/// `00, 01, 10`.
pub fn two_segment_mean_vector(p: f64, a: f64) -> Result<[f64; 3]> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    let q = 1.0 - p;
    let den = a * p * (2.0 - p);
    let side = (1.0 + 2.0 * q - a * q) / den;
    Ok([(1.0 + 2.0 * q) / den, side, side])
}

/// Variance of the two-segment waiting time.
pub fn two_segment_variance(p: f64, a: f64) -> Result<f64> {
    let k = k2_cutoff(p, a, Cutoff::Unbounded)?;
    let extra = poly(p, &[4.0, -2.0, -3.0, 2.0]) / (a * p * p * (2.0 - p).powi(2));
    Ok(k * k - extra)
}

/// `lim_{p→0} σ₂ / K̄₂`.
pub fn two_segment_ratio_limit(a: f64) -> Result<f64> {
    check_probability("a", a)?;
    Ok((1.0 - 4.0 * a / 9.0).sqrt())
}

/// Generating function of the two-segment waiting time.
pub fn two_segment_pgf(p: f64, a: f64, t: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    let q = 1.0 - p;
    let num = a * p * p * t * (1.0 + q * t);
    let den = 1.0 - (2.0 - 3.0 * p + (2.0 - a) * p * p) * t + q * (1.0 - 2.0 * p + a * p * p) * t * t;
    Ok(num / den)
}

/// `T̄ = K̄₂ τ + ((1 - a) / a) τ'`.
pub fn two_timescale_mean(p: f64, a: f64, tau: f64, tau_prime: f64) -> Result<f64> {
    Ok(k2_cutoff(p, a, Cutoff::Unbounded)? * tau + (1.0 - a) / a * tau_prime)
}

/// `E[K L]`, attempts times restarts, for two segments.
pub fn two_segment_mean_kl(p: f64, a: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    Ok(2.0 * (1.0 - a) * (3.0 - 2.0 * p) / (a * a * (2.0 - p) * p))
}

/// `e^{-L₀ / 22}`, the distribution probability over `L₀` km of fiber.
pub fn p_from_length(l0_km: f64) -> Result<f64> {
    if !(l0_km.is_finite() && l0_km >= 0.0) {
        return Err(out_of_range("L0", l0_km, "must be a non-negative length"));
    }
    Ok((-l0_km / 22.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_examples() {
        assert!((k2_cutoff(0.5, 1.0, Cutoff::Finite(1)).unwrap() - 3.0).abs() < 1e-14);
        assert!((k2_cutoff(0.5, 0.5, Cutoff::Unbounded).unwrap() - 16.0 / 3.0).abs() < 1e-14);
        assert!((k2_cutoff(1.0, 0.25, Cutoff::Finite(3)).unwrap() - 4.0).abs() < 1e-14);
        assert!((kn_det(0.5, 2).unwrap() - 8.0 / 3.0).abs() < 1e-14);
        assert!((kn_det(0.3, 1).unwrap() - 1.0 / 0.3).abs() < 1e-14);
        assert!((kn_det_cutoff(0.5, 2, Cutoff::Finite(1)).unwrap() - 3.0).abs() < 1e-14);
        assert!((kn_det_cutoff(0.5, 2, Cutoff::Finite(500)).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!((kn_det_cutoff(0.3, 1, Cutoff::Finite(4)).unwrap() - 1.0 / 0.3).abs() < 1e-13);
        assert!((approx_doubling(1.0, 1.0, 4).unwrap() - 5.0625).abs() < 1e-15);
        assert!((approx_doubling(0.01, 0.5, 4).unwrap() - 8100.0).abs() < 1e-9);
        assert!((harmonic_approx(0.5, 1).unwrap() - 2.0 * (EULER_GAMMA + 0.5)).abs() < 1e-15);
        assert_eq!(relative_error(1.1, 1.0).unwrap().round(), 10.0);
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn small_repeater_limits() {
        let f = small_repeater_mean(SmallScheme::Fixed3, 1.0, 0.4).unwrap();
        assert!((f - 1.0 / 0.16).abs() < 1e-12);
        let d = small_repeater_mean(SmallScheme::Doubling4, 1.0, 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        for p in [0.1, 0.5, 0.9] {
            let k3 = kn_det(p, 3).unwrap();
            assert!((small_repeater_mean(SmallScheme::Fixed3, p, 1.0).unwrap() / k3 - 1.0).abs() < 1e-13);
            assert!((small_repeater_mean(SmallScheme::Dyn3, p, 1.0).unwrap() / k3 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn asymmetric_examples() {
        assert!((asymmetric_mean(&[], &[0.5, 0.25]).unwrap() - 4.4).abs() < 1e-13);
        assert!((asymmetric_mean(&[0, 2], &[0.5, 0.25, 0.1]).unwrap() - 4.0).abs() < 1e-13);
        assert!(asymmetric_mean(&[], &[0.5; 26]).is_err());
        assert!(asymmetric_mean(&[3], &[0.5; 2]).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(parse_schedule("32|32").unwrap(), vec![32, 32]);
        assert_eq!(parse_schedule("2,8").unwrap(), vec![2, 8]);
        assert!(parse_schedule("2|x").is_err());
        assert!(matches!(nested_approx(&[3], 0.5, 0.5), Err(Error::Unsupported(_))));
        let direct = doubling_mean(16, 0.4, 0.7).unwrap();
        assert!((nested_approx(&[16], 0.4, 0.7).unwrap() - direct).abs() < 1e-12 * direct);
    }
}
