//! Implicit transition operator for the symmetric doubling of a chain.
//!
//! A state of the doubled, symmetry-lumped chain is an unordered pair
//! `{k, l}` of base states. A vector over these classes is stored as the
//! symmetric `M x M` matrix `X[k][l] = x{k,l}`, which turns every product
//! with `Q` into two dense `M x M` products with the base matrix `P`:
//!
//! ```text
//! (Q x)     = P X Pᵀ + (1-a) x{0,0} u uᵀ
//! (yᵀ Q)    = sym(Pᵀ W P)  with W the half-split mass matrix of y
//! ```
//!
//! Solves against `I - tQ` reduce to a base-chain solve plus a Stein
//! equation `Y - A Y Aᵀ = C`, handled by Smith's squaring iteration.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::chain::{AbsorbingChain, Violation};
use crate::error::{Error, Result};

const SMITH_MAX_DOUBLINGS: usize = 64;
const SMITH_TOLERANCE: f64 = 1e-17;

/// Index of the unordered pair `{k, l}` among `m` base states, in the order
/// `{0,0}, {0,1}, .., {0,m-1}, {1,1}, ..`.
pub(crate) fn pair_index(k: usize, l: usize, m: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * m - k * k.saturating_sub(1) / 2 + (l - k)
}

pub(crate) fn pair_list(m: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for k in 0..m {
        for l in k..m {
            out.push((k as u32, l as u32));
        }
    }
    out
}

#[derive(Debug)]
pub(crate) struct SymmetricSquare {
    /// Base state count including its absorbing state.
    m: usize,
    a: f64,
    /// Full base transition matrix.
    p: Mat<f64>,
    pairs: Vec<(u32, u32)>,
}

impl SymmetricSquare {
    pub(crate) fn new(base: &AbsorbingChain, a: f64) -> Result<Self> {
        if base.n_absorbing() != 1 {
            return Err(Error::MultipleAbsorbing(base.n_absorbing()));
        }
        if base.is_structured() {
            return Err(Error::Unsupported("implicit chains cannot be doubled again".into()));
        }
        let m = base.len();
        let mut p = Mat::<f64>::zeros(m, m);
        for i in 0..m {
            for (j, v) in base.row(i) {
                p[(i, j)] = v;
            }
        }
        Ok(Self {
            m,
            a,
            p,
            pairs: pair_list(m),
        })
    }

    pub(crate) fn class_count(&self) -> usize {
        self.pairs.len()
    }

    pub(crate) fn stored_len(&self) -> usize {
        self.m * self.m
    }

    fn nb(&self) -> usize {
        self.m - 1
    }

    fn u(&self, i: usize) -> f64 {
        self.p[(i, self.m - 1)]
    }

    pub(crate) fn absorption_vector(&self) -> Vec<f64> {
        let n0 = self.class_count() - 1;
        self.pairs[..n0]
            .iter()
            .map(|&(k, l)| self.a * self.u(k as usize) * self.u(l as usize))
            .collect()
    }

    fn lift(&self, x: &[f64]) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.m, self.m);
        for (c, &(k, l)) in self.pairs[..self.class_count() - 1].iter().enumerate() {
            out[(k as usize, l as usize)] = x[c];
            out[(l as usize, k as usize)] = x[c];
        }
        out
    }

    /// Half-split mass matrix: off-diagonal class mass is shared equally by
    /// the two ordered pairs.
    fn lift_mass(&self, y: &[f64]) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.m, self.m);
        for (c, &(k, l)) in self.pairs[..self.class_count() - 1].iter().enumerate() {
            if k == l {
                out[(k as usize, k as usize)] = y[c];
            } else {
                out[(k as usize, l as usize)] = 0.5 * y[c];
                out[(l as usize, k as usize)] = 0.5 * y[c];
            }
        }
        out
    }

    fn read(&self, x: &Mat<f64>) -> Vec<f64> {
        self.pairs[..self.class_count() - 1]
            .iter()
            .map(|&(k, l)| x[(k as usize, l as usize)])
            .collect()
    }

    fn read_mass(&self, w: &Mat<f64>) -> Vec<f64> {
        self.pairs[..self.class_count() - 1]
            .iter()
            .map(|&(k, l)| {
                let (k, l) = (k as usize, l as usize);
                if k == l {
                    w[(k, k)]
                } else {
                    w[(k, l)] + w[(l, k)]
                }
            })
            .collect()
    }

    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let xm = self.lift(x);
        let pxp = &self.p * &xm * self.p.transpose();
        let mut out = self.read(&pxp);
        let x00 = x[0];
        if x00 != 0.0 {
            let scale = (1.0 - self.a) * x00;
            for (o, &(k, l)) in out.iter_mut().zip(&self.pairs) {
                *o += scale * self.u(k as usize) * self.u(l as usize);
            }
        }
        out
    }

    /// Returns `yᵀ Q` and the mass absorbed in the same step.
    pub(crate) fn vec_mul(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let w = self.lift_mass(y);
        let g = self.p.transpose() * &w * &self.p;
        let mut out = self.read_mass(&g);
        let last = self.m - 1;
        let gnn = g[(last, last)];
        out[0] += (1.0 - self.a) * gnn;
        (out, self.a * gnn)
    }

    pub(crate) fn prob(&self, from: usize, to: usize) -> f64 {
        let (i, j) = self.pairs[from];
        let (i, j) = (i as usize, j as usize);
        let w = self.u(i) * self.u(j);
        if to == self.class_count() - 1 {
            return self.a * w;
        }
        let (k, l) = self.pairs[to];
        let (k, l) = (k as usize, l as usize);
        let mut v = self.p[(i, k)] * self.p[(j, l)];
        if k != l {
            v += self.p[(i, l)] * self.p[(j, k)];
        }
        if to == 0 {
            v += (1.0 - self.a) * w;
        }
        v
    }

    pub(crate) fn row(&self, from: usize) -> Vec<(usize, f64)> {
        (0..self.class_count())
            .map(|to| (to, self.prob(from, to)))
            .filter(|&(_, v)| v != 0.0)
            .collect()
    }

    pub(crate) fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for j in 0..self.m {
                let v = self.p[(i, j)];
                if v < 0.0 {
                    out.push(Violation::Negative { row: i, col: j, value: v });
                }
            }
        }
        out
    }

    pub(crate) fn solver(&self, t: f64) -> Result<StructuredSolver<'_>> {
        StructuredSolver::new(self, t)
    }
}

pub(crate) struct StructuredSolver<'a> {
    op: &'a SymmetricSquare,
    t: f64,
    qb: Mat<f64>,
    ub: Mat<f64>,
    lu: PartialPivLu<f64>,
    /// `(t^k, Qb^k)` for `k = 1, 2, 4, ..`, truncated once negligible.
    powers: Vec<(f64, Mat<f64>)>,
    unit_forward: Option<(Mat<f64>, Mat<f64>)>,
    unit_transpose: Option<(Mat<f64>, Mat<f64>, f64)>,
}

impl<'a> StructuredSolver<'a> {
    fn new(op: &'a SymmetricSquare, t: f64) -> Result<Self> {
        let nb = op.nb();
        let qb = Mat::from_fn(nb, nb, |i, j| op.p[(i, j)]);
        let ub = Mat::from_fn(nb, 1, |i, _| op.u(i));
        let shifted = Mat::from_fn(nb, nb, |i, j| f64::from(i == j) - t * qb[(i, j)]);
        let lu = shifted.partial_piv_lu();

        let mut a = qb.clone();
        let mut tau = t;
        let mut powers = Vec::new();
        loop {
            let (ninf, n1) = norms(&a);
            powers.push((tau, a.clone()));
            if tau.abs() * ninf * n1 < SMITH_TOLERANCE {
                break;
            }
            if powers.len() >= SMITH_MAX_DOUBLINGS {
                return Err(Error::NoConvergence {
                    what: "Smith iteration for the doubled-chain solve",
                    iterations: powers.len(),
                });
            }
            a = &a * &a;
            tau *= tau;
        }
        let mut solver = Self {
            op,
            t,
            qb,
            ub,
            lu,
            powers,
            unit_forward: None,
            unit_transpose: None,
        };
        solver.unit_forward = Some(solver.forward_part(None, true));
        solver.unit_transpose = Some(solver.transpose_part(None, true));
        Ok(solver)
    }

    /// Solve `Y - t Qb Y Qbᵀ = C` (or with `Qbᵀ` in place of `Qb`).
    fn stein(&self, c: Mat<f64>, transpose: bool) -> Mat<f64> {
        let mut s = c;
        for (tau, a) in &self.powers {
            let add = if transpose {
                a.transpose() * &s * a
            } else {
                a * &s * a.transpose()
            };
            s += *tau * add;
        }
        s
    }

    fn forward_part(&self, b: Option<(&Mat<f64>, &Mat<f64>)>, unit: bool) -> (Mat<f64>, Mat<f64>) {
        let nb = self.op.nb();
        let t = self.t;
        let forcing = if unit { t * (1.0 - self.op.a) } else { 0.0 };
        let mut z = match b {
            Some((_, bz)) => bz.clone(),
            None => Mat::zeros(nb, 1),
        };
        for i in 0..nb {
            z[(i, 0)] += forcing * self.ub[(i, 0)];
        }
        self.lu.solve_in_place(&mut z);
        let qz = &self.qb * &z;
        let mut rhs = match b {
            Some((by, _)) => by.clone(),
            None => Mat::zeros(nb, nb),
        };
        for i in 0..nb {
            for j in 0..nb {
                rhs[(i, j)] += t * (qz[(i, 0)] * self.ub[(j, 0)] + self.ub[(i, 0)] * qz[(j, 0)])
                    + forcing * self.ub[(i, 0)] * self.ub[(j, 0)];
            }
        }
        (self.stein(rhs, false), z)
    }

    fn transpose_part(&self, b: Option<(&Mat<f64>, &Mat<f64>)>, unit: bool) -> (Mat<f64>, Mat<f64>, f64) {
        let nb = self.op.nb();
        let t = self.t;
        let mut rhs = match b {
            Some((by, _)) => by.clone(),
            None => Mat::zeros(nb, nb),
        };
        if unit {
            rhs[(0, 0)] += t * (1.0 - self.op.a);
        }
        let y = self.stein(rhs, true);
        let yu = &y * &self.ub;
        let mut z = self.qb.transpose() * &yu;
        for i in 0..nb {
            z[(i, 0)] *= t;
            if let Some((_, bz)) = b {
                z[(i, 0)] += bz[(i, 0)];
            }
        }
        self.lu.solve_transpose_in_place(&mut z);
        let mut g = 0.0;
        for i in 0..nb {
            g += self.ub[(i, 0)] * (yu[(i, 0)] + 2.0 * z[(i, 0)]);
        }
        (y, z, g)
    }

    /// Solve `(I - tQ) x = b` over the transient classes.
    pub(crate) fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let nb = self.op.nb();
        let big = self.op.lift(b);
        let by = Mat::from_fn(nb, nb, |i, j| big[(i, j)]);
        let bz = Mat::from_fn(nb, 1, |i, _| big[(i, nb)]);
        let (y0, z0) = self.forward_part(Some((&by, &bz)), false);
        let (y1, z1) = self.unit_forward.as_ref().expect("initialized in new");
        let denom = 1.0 - y1[(0, 0)];
        if denom.abs() < f64::EPSILON {
            return Err(Error::Numerical("doubled-chain solve is singular".into()));
        }
        let x00 = y0[(0, 0)] / denom;
        let mut full = Mat::<f64>::zeros(self.op.m, self.op.m);
        for i in 0..nb {
            for j in 0..nb {
                full[(i, j)] = y0[(i, j)] + x00 * y1[(i, j)];
            }
            let zi = z0[(i, 0)] + x00 * z1[(i, 0)];
            full[(i, nb)] = zi;
            full[(nb, i)] = zi;
        }
        Ok(self.op.read(&full))
    }

    /// Solve `(I - tQ)ᵀ y = b` over the transient classes.
    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let nb = self.op.nb();
        let big = self.op.lift_mass(b);
        let by = Mat::from_fn(nb, nb, |i, j| big[(i, j)]);
        let bz = Mat::from_fn(nb, 1, |i, _| big[(i, nb)]);
        let (y0, z0, g0) = self.transpose_part(Some((&by, &bz)), false);
        let (y1, z1, g1) = self.unit_transpose.as_ref().expect("initialized in new");
        let denom = 1.0 - g1;
        if denom.abs() < f64::EPSILON {
            return Err(Error::Numerical("doubled-chain transpose solve is singular".into()));
        }
        let g = g0 / denom;
        let mut full = Mat::<f64>::zeros(self.op.m, self.op.m);
        for i in 0..nb {
            for j in 0..nb {
                full[(i, j)] = y0[(i, j)] + g * y1[(i, j)];
            }
            let zi = z0[(i, 0)] + g * z1[(i, 0)];
            full[(i, nb)] = zi;
            full[(nb, i)] = zi;
        }
        Ok(self.op.read_mass(&full))
    }
}

fn norms(a: &Mat<f64>) -> (f64, f64) {
    let mut inf: f64 = 0.0;
    let mut one = vec![0.0; a.ncols()];
    for i in 0..a.nrows() {
        let mut row = 0.0;
        for (j, acc) in one.iter_mut().enumerate() {
            let v = a[(i, j)].abs();
            row += v;
            *acc += v;
        }
        inf = inf.max(row);
    }
    (inf, one.into_iter().fold(0.0, f64::max))
}
