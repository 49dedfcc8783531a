//! Waiting-time statistics of an absorbing chain.

use serde::{Deserialize, Serialize};

use crate::chain::{AbsorbingChain, EdgeMark, WaitingStats};
use crate::error::{out_of_range, Error, Result};
use crate::solve::ShiftedSolver;

pub const DEFAULT_EPS: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const TAIL_TOLERANCE: f64 = 1e-12;
pub const TAIL_MAX_ITERATIONS: usize = 100_000;
const TAIL_FIT_POINTS: usize = 10;
const VECTOR_TOLERANCE: f64 = 1e-9;

/// Expected steps to absorption from every transient state, `(I - Q)K = 1`.
pub fn mean_absorption(chain: &AbsorbingChain) -> Result<Vec<f64>> {
    ShiftedSolver::new(chain, 1.0)?.solve(&vec![1.0; chain.n_transient()])
}

/// `E[K²]` per transient state from `(I - Q)K² = (I + Q)K`.
pub fn second_moment(chain: &AbsorbingChain, mean: &[f64]) -> Result<Vec<f64>> {
    let solver = ShiftedSolver::new(chain, 1.0)?;
    second_moment_with(chain, &solver, mean)
}

fn second_moment_with(chain: &AbsorbingChain, solver: &ShiftedSolver<'_>, mean: &[f64]) -> Result<Vec<f64>> {
    if mean.len() != chain.n_transient() {
        return Err(out_of_range("mean", mean.len(), "length must equal the transient state count"));
    }
    let qk = chain.q_mul(mean);
    let rhs: Vec<f64> = mean.iter().zip(qk).map(|(k, q)| k + q).collect();
    solver.solve(&rhs)
}

/// Mean and second moment with a single factorization.
pub fn moments(chain: &AbsorbingChain) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = ShiftedSolver::new(chain, 1.0)?;
    let mean = solver.solve(&vec![1.0; chain.n_transient()])?;
    let second = second_moment_with(chain, &solver, &mean)?;
    Ok((mean, second))
}

pub fn variances(mean: &[f64], second: &[f64]) -> Vec<f64> {
    mean.iter().zip(second).map(|(m, s)| s - m * m).collect()
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `p_k = P(K = k)` from the initial state, `k = 1, 2, ..`, until the
/// cumulative mass reaches `1 - eps`.
pub fn waiting_pdf(chain: &AbsorbingChain, eps: f64) -> Result<Vec<(u64, f64)>> {
    waiting_pdf_capped(chain, eps, DEFAULT_MAX_STEPS)
}

pub fn waiting_pdf_capped(chain: &AbsorbingChain, eps: f64, max_steps: u64) -> Result<Vec<(u64, f64)>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(out_of_range("eps", eps, "must lie in (0, 1)"));
    }
    let u = chain.absorption_vector();
    let mut x = vec![0.0; chain.n_transient()];
    x[0] = 1.0;
    let mut cumulative = CompensatedSum::default();
    let mut out = Vec::new();
    for k in 1..=max_steps {
        let pk: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
        cumulative.add(pk);
        out.push((k, pk));
        if cumulative.value() >= 1.0 - eps {
            return Ok(out);
        }
        x = chain.q_tmul(&x);
        let alive: f64 = x.iter().sum();
        if alive == 0.0 {
            return Ok(out);
        }
    }
    Err(Error::NoConvergence {
        what: "waiting-time distribution",
        iterations: max_steps as usize,
    })
}

/// Asymptotic geometric law `p_k ≈ c₁ λ₁^(k-1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricTail {
    pub lambda: f64,
    pub c1: f64,
    /// Largest log-deviation of the fitted points from the fitted law.
    pub residual: f64,
    pub iterations: usize,
}

/// Dominant eigenvalue of `Q` by inverse iteration,
/// and `c₁` fitted to the end of the distribution prefix.
pub fn geometric_tail(chain: &AbsorbingChain) -> Result<GeometricTail> {
    let pdf = waiting_pdf(chain, DEFAULT_EPS)?;
    geometric_tail_from_pdf(chain, &pdf)
}

pub fn geometric_tail_from_pdf(chain: &AbsorbingChain, pdf: &[(u64, f64)]) -> Result<GeometricTail> {
    let (lambda, iterations) = dominant_eigenvalue(chain)?;
    let (c1, residual) = fit_tail(pdf, lambda);
    Ok(GeometricTail {
        lambda,
        c1,
        residual,
        iterations,
    })
}

/// Perron root of `Q` by power iteration on `(I - Q)⁻¹`, whose dominant
/// eigenvalue `1 / (1 - λ₁)` is better separated than `λ₁` itself.
pub fn dominant_eigenvalue(chain: &AbsorbingChain) -> Result<(f64, usize)> {
    let solver = ShiftedSolver::new(chain, 1.0)?;
    let n0 = chain.n_transient();
    let mut x = vec![1.0 / n0 as f64; n0];
    let mut previous = f64::NAN;
    for it in 1..=TAIL_MAX_ITERATIONS {
        let y = solver.solve(&x)?;
        let mu: f64 = y.iter().sum();
        if !(mu.is_finite() && mu >= 1.0 - 1e-12) {
            return Err(Error::Numerical(format!("inverse iteration produced growth {mu}")));
        }
        let lambda = (1.0 - 1.0 / mu).max(0.0);
        let mut change = 0.0;
        for (xi, yi) in x.iter_mut().zip(y) {
            let v = yi / mu;
            change += (v - *xi).abs();
            *xi = v;
        }
        if (lambda - previous).abs() <= TAIL_TOLERANCE && change <= VECTOR_TOLERANCE {
            return Ok((lambda, it));
        }
        previous = lambda;
    }
    Err(Error::NoConvergence {
        what: "iteration for the dominant eigenvalue",
        iterations: TAIL_MAX_ITERATIONS,
    })
}

/// `c₁` from the last points of a distribution prefix with the slope fixed
/// at `ln λ`, and the largest log-deviation of those points from the fit.
pub fn fit_tail(pdf: &[(u64, f64)], lambda: f64) -> (f64, f64) {
    if lambda <= 0.0 {
        return (0.0, 0.0);
    }
    let ln_lambda = lambda.ln();
    let points: Vec<(f64, f64)> = pdf
        .iter()
        .rev()
        .filter(|&&(_, pk)| pk > 0.0)
        .take(TAIL_FIT_POINTS)
        .map(|&(k, pk)| ((k - 1) as f64, pk.ln()))
        .collect();
    if points.is_empty() {
        return (0.0, f64::INFINITY);
    }
    let intercept = points.iter().map(|(k, lp)| lp - k * ln_lambda).sum::<f64>() / points.len() as f64;
    let residual = points
        .iter()
        .map(|(k, lp)| (lp - intercept - k * ln_lambda).abs())
        .fold(0.0, f64::max);
    (intercept.exp(), residual)
}

/// First component of the probability generating function
/// `g(t) = t (I - tQ)⁻¹ u`.
pub fn pgf_eval(chain: &AbsorbingChain, t: f64) -> Result<f64> {
    pgf_vector(chain, t).map(|g| g[0])
}

pub fn pgf_vector(chain: &AbsorbingChain, t: f64) -> Result<Vec<f64>> {
    if chain.n_absorbing() != 1 {
        return Err(Error::MultipleAbsorbing(chain.n_absorbing()));
    }
    if !(t.is_finite() && t.abs() <= 1.0) {
        return Err(out_of_range("t", t, "must satisfy |t| <= 1"));
    }
    if t == 1.0 {
        return Ok(vec![1.0; chain.n_transient()]);
    }
    if t == 0.0 {
        return Ok(vec![0.0; chain.n_transient()]);
    }
    let rhs: Vec<f64> = chain.absorption_vector().into_iter().map(|u| t * u).collect();
    ShiftedSolver::new(chain, t)?.solve(&rhs)
}

/// Expected visits to each transient state from the initial state, row 0
/// of `(I - Q)⁻¹`.
pub fn expected_visits(chain: &AbsorbingChain) -> Result<Vec<f64>> {
    let mut e0 = vec![0.0; chain.n_transient()];
    e0[0] = 1.0;
    ShiftedSolver::new(chain, 1.0)?.solve_transpose(&e0)
}

/// Expected total weight of traversed edges from the initial state; edge
/// `(i, j)` is traversed `R₀ᵢ Pᵢⱼ` times on average.
pub fn edge_expected_counts(chain: &AbsorbingChain, marks: &EdgeMark) -> Result<f64> {
    marks.validate()?;
    let n0 = chain.n_transient();
    for &(i, j) in marks.weights.keys() {
        if i >= chain.len() || j >= chain.len() {
            return Err(out_of_range("edge", format!("({i}, {j})"), "state index out of range"));
        }
    }
    let visits = expected_visits(chain)?;
    let out_mass: Vec<f64> = {
        let q1 = chain.q_mul(&vec![1.0; n0]);
        q1.into_iter().zip(chain.absorption_vector()).map(|(a, b)| a + b).collect()
    };
    let mut total = CompensatedSum::default();
    for i in 0..n0 {
        let w = marks.default_for(i);
        if w != 0.0 {
            total.add(visits[i] * w * out_mass[i]);
        }
    }
    for (&(i, j), &w) in &marks.weights {
        if i < n0 {
            total.add(visits[i] * chain.prob(i, j) * (w - marks.default_for(i)));
        }
    }
    Ok(total.value())
}

/// Every statistic from the initial state at truncation `eps`.
pub fn waiting_stats(chain: &AbsorbingChain, eps: f64) -> Result<WaitingStats> {
    let (mean, second) = moments(chain)?;
    let pdf = waiting_pdf(chain, eps)?;
    let tail = geometric_tail_from_pdf(chain, &pdf)?;
    Ok(WaitingStats {
        mean: mean[0],
        second_moment: second[0],
        variance: second[0] - mean[0] * mean[0],
        pdf_prefix: pdf,
        tail_lambda: tail.lambda,
        tail_c: tail.c1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_single_segment;

    #[test]
    fn single_segment_statistics() {
        let c = build_single_segment(0.5).unwrap();
        let (m, s) = moments(&c).unwrap();
        assert!((m[0] - 2.0).abs() < 1e-14);
        assert!((s[0] - 6.0).abs() < 1e-13);
        let pdf = waiting_pdf(&c, 1e-9).unwrap();
        assert_eq!(&pdf[..3], &[(1, 0.5), (2, 0.25), (3, 0.125)]);
        let tail = geometric_tail(&c).unwrap();
        assert!((tail.lambda - 0.5).abs() < 1e-15);
        assert!((tail.c1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pgf_endpoints() {
        let c = build_single_segment(0.3).unwrap();
        assert_eq!(pgf_eval(&c, 1.0).unwrap(), 1.0);
        assert_eq!(pgf_eval(&c, 0.0).unwrap(), 0.0);
        // Geometric: g(t) = p t / (1 - q t).
        let g = pgf_eval(&c, -0.5).unwrap();
        assert!((g - 0.3 * -0.5 / (1.0 + 0.7 * 0.5)).abs() < 1e-15);
        assert!(pgf_eval(&c, 1.5).is_err());
    }

    #[test]
    fn eps_validation() {
        let c = build_single_segment(0.3).unwrap();
        assert!(waiting_pdf(&c, 0.0).is_err());
        assert!(waiting_pdf(&c, 1.0).is_err());
        assert!(matches!(
            waiting_pdf_capped(&build_single_segment(1e-6).unwrap(), 1e-9, 10),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn uniform_marks_count_steps() {
        let c = build_single_segment(0.25).unwrap();
        assert!((edge_expected_counts(&c, &EdgeMark::uniform(1.0)).unwrap() - 4.0).abs() < 1e-13);
        assert_eq!(edge_expected_counts(&c, &EdgeMark::uniform(0.0)).unwrap(), 0.0);
    }
}
