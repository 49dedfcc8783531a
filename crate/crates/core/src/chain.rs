//! The absorbing-chain data model shared by every builder and analysis.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, out_of_range, Error, Result};
use crate::label::StateLabel;
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::structured::SymmetricSquare;

/// Row-sum and entry tolerance used by [`validate_chain`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cutoff {
    Finite(u32),
    Unbounded,
}

impl Cutoff {
    pub fn finite(self) -> Option<u32> {
        match self {
            Cutoff::Finite(m) => Some(m),
            Cutoff::Unbounded => None,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Finite(m) => write!(f, "{m}"),
            Cutoff::Unbounded => f.write_str("inf"),
        }
    }
}

/// Physical and protocol parameters of one repeater scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeaterParams {
    pub n: usize,
    pub p: f64,
    pub a: f64,
    pub m: Cutoff,
    pub tau: f64,
    pub tau_prime: f64,
    pub c: u32,
}

impl RepeaterParams {
    pub fn new(n: usize, p: f64, a: f64) -> Result<Self> {
        let params = Self {
            n,
            p,
            a,
            m: Cutoff::Unbounded,
            tau: 1.0,
            tau_prime: 0.0,
            c: 0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_cutoff(mut self, m: Cutoff) -> Result<Self> {
        self.m = m;
        self.validate()?;
        Ok(self)
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(out_of_range("n", self.n, "must be at least 1"));
        }
        check_probability("p", self.p)?;
        check_probability("a", self.a)?;
        if self.m == Cutoff::Finite(0) {
            return Err(out_of_range("m", 0, "cutoff must be a positive integer"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(out_of_range("tau", self.tau, "must be positive"));
        }
        if !(self.tau_prime.is_finite() && self.tau_prime >= 0.0) {
            return Err(out_of_range("tau_prime", self.tau_prime, "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Transitions {
    Sparse { q: CsrMatrix, u: CsrMatrix },
    SymmetricSquare(Arc<SymmetricSquare>),
}

/// Absorbing Markov chain with the initial state at index 0 and the
/// absorbing states at the end. `Q` holds transient-to-transient
/// probabilities and `U` transient-to-absorbing ones.
#[derive(Clone, Debug)]
pub struct AbsorbingChain {
    labels: Arc<[StateLabel]>,
    n_absorbing: usize,
    pub(crate) transitions: Transitions,
}

impl AbsorbingChain {
    /// Assemble from explicit blocks. Only shapes are checked here; use
    /// [`validate_chain`] for the probabilistic invariants.
    pub fn from_blocks(labels: Vec<StateLabel>, q: CsrMatrix, u: CsrMatrix) -> Result<Self> {
        let n0 = q.nrows();
        let n1 = u.ncols();
        if q.ncols() != n0 || u.nrows() != n0 {
            return Err(Error::MalformedChain(format!(
                "Q is {}x{} and U is {}x{}",
                q.nrows(),
                q.ncols(),
                u.nrows(),
                u.ncols()
            )));
        }
        if n1 == 0 {
            return Err(Error::MalformedChain("chain has no absorbing state".into()));
        }
        if n0 == 0 {
            return Err(Error::MalformedChain("chain has no transient initial state".into()));
        }
        if labels.len() != n0 + n1 {
            return Err(Error::MalformedChain(format!(
                "{} labels for {} states",
                labels.len(),
                n0 + n1
            )));
        }
        if q.values().iter().chain(u.values()).any(|v| !v.is_finite()) {
            return Err(Error::MalformedChain("non-finite transition probability".into()));
        }
        Ok(Self {
            labels: labels.into(),
            n_absorbing: n1,
            transitions: Transitions::Sparse { q, u },
        })
    }

    /// Assemble from full rows of the transient states: each row lists
    /// `(target, probability)` over all `labels.len()` states.
    pub fn from_transient_rows(
        labels: Vec<StateLabel>,
        n_absorbing: usize,
        rows: impl IntoIterator<Item = Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let n = labels.len();
        let n0 = n.checked_sub(n_absorbing).ok_or_else(|| {
            Error::MalformedChain(format!("{n_absorbing} absorbing states among {n}"))
        })?;
        let mut qb = CsrBuilder::new(n0);
        let mut ub = CsrBuilder::new(n_absorbing);
        let mut count = 0;
        for row in rows {
            for (c, v) in row {
                if c >= n {
                    return Err(Error::MalformedChain(format!("target {c} out of range {n}")));
                }
                if c < n0 {
                    qb.push(c, v);
                } else {
                    ub.push(c - n0, v);
                }
            }
            qb.finish_row();
            ub.finish_row();
            count += 1;
        }
        if count != n0 {
            return Err(Error::MalformedChain(format!("{count} rows for {n0} transient states")));
        }
        Self::from_blocks(labels, qb.build(), ub.build())
    }

    pub(crate) fn structured(labels: Vec<StateLabel>, op: SymmetricSquare) -> Self {
        Self {
            labels: labels.into(),
            n_absorbing: 1,
            transitions: Transitions::SymmetricSquare(Arc::new(op)),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_transient(&self) -> usize {
        self.labels.len() - self.n_absorbing
    }

    pub fn n_absorbing(&self) -> usize {
        self.n_absorbing
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: &StateLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// True when `Q` is held implicitly rather than as a sparse matrix.
    pub fn is_structured(&self) -> bool {
        matches!(self.transitions, Transitions::SymmetricSquare(_))
    }

    /// The explicit `Q` block, if materialized.
    pub fn q(&self) -> Option<&CsrMatrix> {
        match &self.transitions {
            Transitions::Sparse { q, .. } => Some(q),
            Transitions::SymmetricSquare(_) => None,
        }
    }

    /// The explicit `U` block, if materialized.
    pub fn u(&self) -> Option<&CsrMatrix> {
        match &self.transitions {
            Transitions::Sparse { u, .. } => Some(u),
            Transitions::SymmetricSquare(_) => None,
        }
    }

    /// Number of stored transition values: nonzeros of `[Q | U]`, or the
    /// size of the dense base matrix for an implicit chain.
    pub fn nnz(&self) -> usize {
        match &self.transitions {
            Transitions::Sparse { q, u } => q.nnz() + u.nnz(),
            Transitions::SymmetricSquare(op) => op.stored_len(),
        }
    }

    /// Total one-step absorption probability per transient state, `U·1`.
    pub fn absorption_vector(&self) -> Vec<f64> {
        match &self.transitions {
            Transitions::Sparse { u, .. } => u.row_sums(),
            Transitions::SymmetricSquare(op) => op.absorption_vector(),
        }
    }

    /// `Q x` for a vector over transient states.
    pub fn q_mul(&self, x: &[f64]) -> Vec<f64> {
        match &self.transitions {
            Transitions::Sparse { q, .. } => q.mul_vec(x),
            Transitions::SymmetricSquare(op) => op.mul_vec(x),
        }
    }

    /// `xᵀ Q` for a row vector over transient states.
    pub fn q_tmul(&self, x: &[f64]) -> Vec<f64> {
        match &self.transitions {
            Transitions::Sparse { q, .. } => q.vec_mul(x),
            Transitions::SymmetricSquare(op) => op.vec_mul(x).0,
        }
    }

    /// Entry of the full transition matrix `P`.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        let n0 = self.n_transient();
        if i >= n0 {
            return if i == j { 1.0 } else { 0.0 };
        }
        match &self.transitions {
            Transitions::Sparse { q, u } => {
                if j < n0 {
                    q.get(i, j)
                } else {
                    u.get(i, j - n0)
                }
            }
            Transitions::SymmetricSquare(op) => op.prob(i, j),
        }
    }

    /// Nonzero entries of row `i` of the full transition matrix.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        let n0 = self.n_transient();
        if i >= n0 {
            return vec![(i, 1.0)];
        }
        match &self.transitions {
            Transitions::Sparse { q, u } => q.row(i).chain(u.row(i).map(|(c, v)| (c + n0, v))).collect(),
            Transitions::SymmetricSquare(op) => op.row(i),
        }
    }

    /// Dense copy of the full transition matrix. Intended for small chains.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut out = vec![vec![0.0; n]; n];
        for (i, dense_row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                dense_row[j] = v;
            }
        }
        out
    }

    /// Write the chain in the plain-text dump format: a header `N N1`, one
    /// label per line, then `row col value` triplets of the full matrix.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        if self.is_structured() {
            return Err(Error::Unsupported(
                "implicit symmetric-square chains are not dumped; build a materialized level".into(),
            ));
        }
        writeln!(w, "{} {}", self.len(), self.n_absorbing)?;
        for l in self.labels.iter() {
            writeln!(w, "{l}")?;
        }
        for i in 0..self.len() {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:.16e}")?;
            }
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse(format!("unexpected end of dump, expected {what}")))
        };
        let header = next("header")?;
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad dump header `{header}`")))
        };
        let n = parse_usize(parts.next())?;
        let n1 = parse_usize(parts.next())?;
        if n1 == 0 || n1 >= n {
            return Err(Error::Parse(format!("bad dump header `{header}`")));
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(next("label")?.trim().parse()?);
        }
        let n0 = n - n1;
        let mut rows = vec![Vec::new(); n0];
        loop {
            let line = match next("triplet") {
                Ok(l) => l,
                Err(Error::Parse(_)) => break,
                Err(e) => return Err(e),
            };
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let bad = || Error::Parse(format!("bad triplet `{line}`"));
            let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let j: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if i >= n || j >= n {
                return Err(bad());
            }
            if i < n0 {
                rows[i].push((j, v));
            } else if i != j || v != 1.0 {
                return Err(Error::Parse(format!("absorbing state {i} has outgoing entry `{line}`")));
            }
        }
        Self::from_transient_rows(labels, n1, rows)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    Negative { row: usize, col: usize, value: f64 },
    AboveOne { row: usize, col: usize, value: f64 },
    DuplicateLabel { first: usize, second: usize },
    Placement(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum:.17}"),
            Violation::Negative { row, col, value } => write!(f, "entry ({row}, {col}) = {value} is negative"),
            Violation::AboveOne { row, col, value } => write!(f, "entry ({row}, {col}) = {value} exceeds 1"),
            Violation::DuplicateLabel { first, second } => {
                write!(f, "states {first} and {second} share a label")
            }
            Violation::Placement(msg) => f.write_str(msg),
        }
    }
}

/// Check every structural invariant of a chain. An empty result means the
/// chain is valid.
pub fn validate_chain(chain: &AbsorbingChain) -> Vec<Violation> {
    let mut out = Vec::new();
    let n0 = chain.n_transient();

    let mut seen: HashMap<&StateLabel, usize> = HashMap::new();
    for (i, l) in chain.labels().iter().enumerate() {
        if let Some(&first) = seen.get(l) {
            out.push(Violation::DuplicateLabel { first, second: i });
        } else {
            seen.insert(l, i);
        }
    }

    match &chain.transitions {
        Transitions::Sparse { q, u } => {
            for i in 0..n0 {
                let mut sum = 0.0;
                for (c, v) in q.row(i).chain(u.row(i).map(|(c, v)| (c + n0, v))) {
                    sum += v;
                    if v < 0.0 {
                        out.push(Violation::Negative { row: i, col: c, value: v });
                    } else if v > 1.0 + ROW_SUM_TOLERANCE {
                        out.push(Violation::AboveOne { row: i, col: c, value: v });
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Violation::RowSum { row: i, sum });
                }
            }
            let reached: HashSet<usize> = u.triplets().map(|(_, c, _)| c).collect();
            if reached.is_empty() {
                out.push(Violation::Placement("no transient state reaches an absorbing state".into()));
            }
        }
        Transitions::SymmetricSquare(op) => {
            for v in op.validate() {
                out.push(v);
            }
            let ones = vec![1.0; n0];
            let qs = chain.q_mul(&ones);
            let us = chain.absorption_vector();
            for i in 0..n0 {
                let sum = qs[i] + us[i];
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Violation::RowSum { row: i, sum });
                }
            }
        }
    }
    out
}

/// Weights attached to transitions when accumulating expected costs.
///
/// Unlisted edges take `timed_default`, except edges leaving a state listed
/// in `instantaneous`, which take `instant_default`.
#[derive(Clone, Debug, Default)]
pub struct EdgeMark {
    pub weights: HashMap<(usize, usize), f64>,
    pub timed_default: f64,
    pub instant_default: f64,
    pub instantaneous: HashSet<usize>,
}

impl EdgeMark {
    /// Every transition weighs `w`.
    pub fn uniform(w: f64) -> Self {
        Self {
            timed_default: w,
            instant_default: w,
            ..Self::default()
        }
    }

    /// Timed edges weigh 1, zero-time edges leaving `instantaneous` weigh 0.
    pub fn steps(instantaneous: impl IntoIterator<Item = usize>) -> Self {
        Self {
            timed_default: 1.0,
            instant_default: 0.0,
            instantaneous: instantaneous.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn with_weight(mut self, from: usize, to: usize, w: f64) -> Self {
        self.weights.insert((from, to), w);
        self
    }

    pub fn default_for(&self, from: usize) -> f64 {
        if self.instantaneous.contains(&from) {
            self.instant_default
        } else {
            self.timed_default
        }
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights
            .get(&(from, to))
            .copied()
            .unwrap_or_else(|| self.default_for(from))
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .weights
            .values()
            .chain([&self.timed_default, &self.instant_default]);
        for &w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(out_of_range("edge weight", w, "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Summary statistics of the waiting time from the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingStats {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub pdf_prefix: Vec<(u64, f64)>,
    pub tail_lambda: f64,
    pub tail_c: f64,
}
