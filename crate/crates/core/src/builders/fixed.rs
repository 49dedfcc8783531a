use std::fmt;
use std::str::FromStr;

use crate::builders::check_states;
use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Error, Result};
use crate::label::{SegmentString, StateLabel};

/// Single segment: `0` retries with probability `q`, `1` is absorbing.
pub fn build_single_segment(p: f64) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    AbsorbingChain::from_transient_rows(
        vec![
            SegmentString::zeros(1).into(),
            SegmentString::merged(1).into(),
        ],
        1,
        [vec![(0, 1.0 - p), (1, p)]],
    )
}

pub(crate) fn merged_label(left: &StateLabel, right: &StateLabel) -> StateLabel {
    match (left.segment_count(), right.segment_count()) {
        (Some(l), Some(r)) => SegmentString::merged(l + r).into(),
        _ => StateLabel::concat(left, right),
    }
}

pub(crate) fn require_materialized_single(chain: &AbsorbingChain) -> Result<()> {
    if chain.n_absorbing() != 1 {
        return Err(Error::MultipleAbsorbing(chain.n_absorbing()));
    }
    if chain.is_structured() {
        return Err(Error::Unsupported("cannot compose an implicit chain".into()));
    }
    Ok(())
}

/// Join two sub-repeaters with an outermost swap of success probability `a`.
///
/// The result is the Kronecker product of the two transition matrices in
/// which mass reaching the joint absorbing state is split: a fraction `a`
/// stays absorbed and `1 - a` returns to the initial state.
pub fn combine_fixed(left: &AbsorbingChain, right: &AbsorbingChain, a: f64) -> Result<AbsorbingChain> {
    check_probability("a", a)?;
    require_materialized_single(left)?;
    require_materialized_single(right)?;
    let (nl, nr) = (left.len(), right.len());
    check_states(nl as u128 * nr as u128)?;
    let n = nl * nr;
    let last = n - 1;

    let mut labels = Vec::with_capacity(n);
    for li in left.labels() {
        for rj in right.labels() {
            labels.push(StateLabel::concat(li, rj));
        }
    }
    labels[last] = merged_label(&left.labels()[nl - 1], &right.labels()[nr - 1]);

    let right_rows: Vec<Vec<(usize, f64)>> = (0..nr).map(|j| right.row(j)).collect();
    let rows = (0..last).map(|s| {
        let (i, j) = (s / nr, s % nr);
        let mut row = Vec::new();
        let mut absorbed = 0.0;
        for (k, pk) in left.row(i) {
            for &(l, pl) in &right_rows[j] {
                let target = k * nr + l;
                if target == last {
                    absorbed += pk * pl;
                } else {
                    row.push((target, pk * pl));
                }
            }
        }
        if absorbed != 0.0 {
            row.push((0, (1.0 - a) * absorbed));
            row.push((last, a * absorbed));
        }
        row
    });
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

/// Fixed swapping order as a binary tree over segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchemeTree {
    Leaf,
    Node(Box<SchemeTree>, Box<SchemeTree>),
}

impl SchemeTree {
    pub fn node(left: SchemeTree, right: SchemeTree) -> Self {
        SchemeTree::Node(Box::new(left), Box::new(right))
    }

    /// Split `n` segments as evenly as possible, the left part taking
    /// `n / 2`.
    pub fn balanced(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(out_of_range("n", n, "tree needs at least one segment"));
        }
        Ok(Self::balanced_inner(n))
    }

    fn balanced_inner(n: usize) -> Self {
        if n == 1 {
            SchemeTree::Leaf
        } else {
            Self::node(Self::balanced_inner(n / 2), Self::balanced_inner(n - n / 2))
        }
    }

    /// Complete tree of depth `d`, the doubling scheme over `2^d` segments.
    pub fn doubling(d: u32) -> Result<Self> {
        if d > 20 {
            return Err(out_of_range("d", d, "doubling depth must be at most 20"));
        }
        Self::balanced(1 << d)
    }

    /// `(- (- (- -)))`: single segments joined onto the left of a growing
    /// right part, so the rightmost pair is swapped first.
    pub fn left_comb(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(out_of_range("n", n, "tree needs at least one segment"));
        }
        let mut tree = SchemeTree::Leaf;
        for _ in 1..n {
            tree = Self::node(SchemeTree::Leaf, tree);
        }
        Ok(tree)
    }

    /// `(((- -) -) -)`: the mirror image of [`SchemeTree::left_comb`].
    pub fn right_comb(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(out_of_range("n", n, "tree needs at least one segment"));
        }
        let mut tree = SchemeTree::Leaf;
        for _ in 1..n {
            tree = Self::node(tree, SchemeTree::Leaf);
        }
        Ok(tree)
    }

    pub fn leaves(&self) -> usize {
        match self {
            SchemeTree::Leaf => 1,
            SchemeTree::Node(l, r) => l.leaves() + r.leaves(),
        }
    }

    /// Number of states of the fixed-scheme chain, `2^n`.
    pub fn state_count(&self) -> u128 {
        1u128.checked_shl(self.leaves() as u32).unwrap_or(u128::MAX)
    }
}

impl fmt::Display for SchemeTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeTree::Leaf => f.write_str("-"),
            SchemeTree::Node(l, r) => write!(f, "({l} {r})"),
        }
    }
}

impl FromStr for SchemeTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let tree = parse_tree(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing input in scheme tree `{s}`")));
        }
        Ok(tree)
    }
}

fn parse_tree(tokens: &[char], pos: &mut usize) -> Result<SchemeTree> {
    match tokens.get(*pos) {
        Some('-') => {
            *pos += 1;
            Ok(SchemeTree::Leaf)
        }
        Some('(') => {
            *pos += 1;
            let left = parse_tree(tokens, pos)?;
            let right = parse_tree(tokens, pos)?;
            if tokens.get(*pos) != Some(&')') {
                return Err(Error::Parse("scheme tree node needs exactly two children".into()));
            }
            *pos += 1;
            Ok(SchemeTree::node(left, right))
        }
        other => Err(Error::Parse(format!("unexpected {other:?} in scheme tree"))),
    }
}

/// Recursive fold of [`combine_fixed`] over a scheme tree.
pub fn build_fixed_scheme(tree: &SchemeTree, p: f64, a: f64) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    check_states(tree.state_count())?;
    fold(tree, p, a)
}

fn fold(tree: &SchemeTree, p: f64, a: f64) -> Result<AbsorbingChain> {
    match tree {
        SchemeTree::Leaf => build_single_segment(p),
        SchemeTree::Node(l, r) => combine_fixed(&fold(l, p, a)?, &fold(r, p, a)?, a),
    }
}
