//! Linear solves against `I - tQ`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::chain::{AbsorbingChain, Transitions};
use crate::error::{Error, Result};
use crate::structured::StructuredSolver;

/// Chains with fewer transient states than this are factored densely.
pub const DENSE_THRESHOLD: usize = 64;

enum Factor<'a> {
    Dense(PartialPivLu<f64>),
    Sparse(Lu<usize, f64>),
    Structured(StructuredSolver<'a>),
}

/// Factorization of `I - tQ` for one chain, reusable across right-hand sides.
pub struct ShiftedSolver<'a> {
    chain: &'a AbsorbingChain,
    t: f64,
    factor: Factor<'a>,
}

impl<'a> ShiftedSolver<'a> {
    pub fn new(chain: &'a AbsorbingChain, t: f64) -> Result<Self> {
        let n = chain.n_transient();
        let factor = match &chain.transitions {
            Transitions::SymmetricSquare(op) => Factor::Structured(op.solver(t)?),
            Transitions::Sparse { q, .. } if n < DENSE_THRESHOLD => {
                let mut m = Mat::<f64>::identity(n, n);
                for (i, j, v) in q.triplets() {
                    m[(i, j)] -= t * v;
                }
                Factor::Dense(m.partial_piv_lu())
            }
            Transitions::Sparse { q, .. } => {
                let mut triplets: Vec<Triplet<usize, usize, f64>> =
                    (0..n).map(|i| Triplet::new(i, i, 1.0)).collect();
                triplets.extend(q.triplets().map(|(i, j, v)| Triplet::new(i, j, -t * v)));
                let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
                    .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))?;
                let lu = mat
                    .sp_lu()
                    .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;
                Factor::Sparse(lu)
            }
        };
        Ok(Self { chain, t, factor })
    }

    fn raw(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        match &self.factor {
            Factor::Structured(s) => {
                if transpose {
                    s.solve_transpose(b)
                } else {
                    s.solve(b)
                }
            }
            Factor::Dense(lu) => Ok(solve_with(lu, b, transpose)),
            Factor::Sparse(lu) => Ok(solve_with(lu, b, transpose)),
        }
    }

    fn apply(&self, x: &[f64], transpose: bool) -> Vec<f64> {
        let qx = if transpose {
            self.chain.q_tmul(x)
        } else {
            self.chain.q_mul(x)
        };
        x.iter().zip(qx).map(|(xi, qi)| xi - self.t * qi).collect()
    }

    fn refined(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.chain.n_transient() {
            return Err(Error::Numerical(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.chain.n_transient()
            )));
        }
        let mut x = self.raw(b, transpose)?;
        let ax = self.apply(&x, transpose);
        let r: Vec<f64> = b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.raw(&r, transpose)?;
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("solve produced non-finite values".into()));
        }
        Ok(x)
    }

    /// Solve `(I - tQ) x = b`, with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined(b, false)
    }

    /// Solve `(I - tQ)ᵀ y = b`, with one step of iterative refinement.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined(b, true)
    }
}

fn solve_with<S: Solve<f64>>(lu: &S, b: &[f64], transpose: bool) -> Vec<f64> {
    let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    if transpose {
        lu.solve_transpose_in_place(&mut rhs);
    } else {
        lu.solve_in_place(&mut rhs);
    }
    (0..b.len()).map(|i| rhs[(i, 0)]).collect()
}
