//! Exact compression of chains by lumpable partitions.

use std::sync::Arc;

use crate::builders::{build_single_segment, check_nonzeros, check_states};
use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Error, Result};
use crate::label::{SegmentString, StateLabel};
use crate::structured::{pair_index, pair_list, SymmetricSquare};

pub const LUMP_TOLERANCE: f64 = 1e-12;

/// Disjoint groups of state indices covering a chain. The initial state is
/// alone in group 0 and every absorbing state is alone in one of the
/// trailing groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidPartition("empty group".into()));
        }
        if groups.first().map(Vec::as_slice) != Some(&[0][..]) {
            return Err(Error::InvalidPartition("the initial state must be alone in group 0".into()));
        }
        Ok(Self { groups })
    }

    /// Every state in its own group.
    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Build from a group index per state.
    pub fn from_assignment(assignment: &[usize]) -> Result<Self> {
        let count = assignment.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); count];
        for (s, &g) in assignment.iter().enumerate() {
            groups[g].push(s);
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn check_against(&self, chain: &AbsorbingChain) -> Result<Vec<usize>> {
        let n = chain.len();
        let mut owner = vec![usize::MAX; n];
        for (g, members) in self.groups.iter().enumerate() {
            for &s in members {
                if s >= n {
                    return Err(Error::InvalidPartition(format!("state {s} out of range {n}")));
                }
                if owner[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("state {s} is in two groups")));
                }
                owner[s] = g;
            }
        }
        if let Some(s) = owner.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidPartition(format!("state {s} is in no group")));
        }
        let n1 = chain.n_absorbing();
        let g1 = self.groups.len() - n1;
        for (k, s) in (chain.n_transient()..n).enumerate() {
            if self.groups[g1 + k] != [s] {
                return Err(Error::InvalidPartition(format!(
                    "absorbing state {s} must be alone in group {}",
                    g1 + k
                )));
            }
        }
        Ok(owner)
    }
}

/// Quotient chain of a lumpable partition.
///
/// Every member of a group must send the same total probability into every
/// group, within [`LUMP_TOLERANCE`].
pub fn lump(chain: &AbsorbingChain, partition: &Partition) -> Result<AbsorbingChain> {
    let owner = partition.check_against(chain)?;
    let ng = partition.len();
    let ng0 = ng - chain.n_absorbing();
    let mut reference = vec![0.0; ng];
    let mut current = vec![0.0; ng];
    let mut rows = Vec::with_capacity(ng0);
    for (g, members) in partition.groups()[..ng0].iter().enumerate() {
        reference.iter_mut().for_each(|v| *v = 0.0);
        for (j, v) in chain.row(members[0]) {
            reference[owner[j]] += v;
        }
        for &s in &members[1..] {
            current.iter_mut().for_each(|v| *v = 0.0);
            for (j, v) in chain.row(s) {
                current[owner[j]] += v;
            }
            for target in 0..ng {
                if (current[target] - reference[target]).abs() > LUMP_TOLERANCE {
                    return Err(Error::NotLumpable {
                        group: g,
                        target,
                        state_a: members[0],
                        state_b: s,
                        mass_a: reference[target],
                        mass_b: current[target],
                    });
                }
            }
        }
        rows.push(
            reference
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect(),
        );
    }
    let labels = partition
        .groups()
        .iter()
        .map(|members| match members.as_slice() {
            [single] => chain.labels()[*single].clone(),
            many => StateLabel::Class(many.iter().map(|&s| chain.labels()[s].clone()).collect()),
        })
        .collect();
    AbsorbingChain::from_transient_rows(labels, chain.n_absorbing(), rows)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Deterministic swapping lumped by the number of ready segments: state
/// `S_i` has `i` ready segments and
/// `P(S_i -> S_j) = C(n-i, j-i) p^(j-i) q^(n-j)`.
pub fn deterministic_lumped(n: usize, p: f64) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(out_of_range("n", n, "must be at least 1"));
    }
    check_states(n as u128 + 1)?;
    let q = 1.0 - p;
    let labels = (0..=n).map(|i| StateLabel::ReadyCount(i as u32)).collect();
    let rows = (0..n).map(|i| {
        (i..=n)
            .map(|j| (j, binomial(n - i, j - i) * p.powi((j - i) as i32) * q.powi((n - j) as i32)))
            .filter(|&(_, v)| v != 0.0)
            .collect()
    });
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

/// How the doubled chain's transitions are held.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Materialize while the estimated transition count stays below the
    /// nonzero cap, otherwise go implicit.
    Auto,
    Materialized,
    Implicit,
}

/// Double a chain whose two halves are interchangeable, keeping only
/// unordered pairs of half-states. `delay = 0` sends a failed outermost
/// swap straight back to the initial state; `delay = c > 0` inserts `c`
/// waiting states first.
pub fn symmetric_double(base: &AbsorbingChain, a: f64, delay: u32) -> Result<AbsorbingChain> {
    symmetric_double_with(base, a, delay, Representation::Materialized)
}

pub fn symmetric_double_with(
    base: &AbsorbingChain,
    a: f64,
    delay: u32,
    repr: Representation,
) -> Result<AbsorbingChain> {
    check_probability("a", a)?;
    if base.n_absorbing() != 1 {
        return Err(Error::MultipleAbsorbing(base.n_absorbing()));
    }
    let m = base.len();
    let classes = m * (m + 1) / 2;
    check_states(classes as u128 + delay as u128)?;
    let avg_row = base.nnz() as f64 / m as f64;
    let estimate = classes as f64 * avg_row * avg_row * 0.5;
    let implicit = match repr {
        Representation::Implicit => true,
        Representation::Materialized => false,
        Representation::Auto => estimate > crate::builders::DEFAULT_MAX_NONZEROS as f64 / 8.0,
    };
    let labels = doubled_labels(base, delay);
    if implicit {
        if delay > 0 {
            return Err(Error::Unsupported(
                "implicit doubling supports immediate restarts only".into(),
            ));
        }
        let op = SymmetricSquare::new(base, a)?;
        return Ok(AbsorbingChain::structured(labels, op));
    }
    check_nonzeros(estimate as u128)?;

    let base_rows: Vec<Vec<(usize, f64)>> = (0..m).map(|i| base.row(i)).collect();
    let pairs = pair_list(m);
    let nn = classes - 1;
    let delay = delay as usize;
    let absorbing = nn + delay;
    let mut acc = vec![0.0; classes];
    let mut touched: Vec<usize> = Vec::new();
    let mut rows = Vec::with_capacity(absorbing);
    for &(i, j) in &pairs[..nn] {
        for &(k, pk) in &base_rows[i as usize] {
            for &(l, pl) in &base_rows[j as usize] {
                let c = pair_index(k, l, m);
                if acc[c] == 0.0 {
                    touched.push(c);
                }
                acc[c] += pk * pl;
            }
        }
        let reached = acc[nn];
        acc[nn] = 0.0;
        let mut row: Vec<(usize, f64)> = touched
            .drain(..)
            .filter(|&c| c != nn)
            .map(|c| (c, std::mem::take(&mut acc[c])))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        if reached != 0.0 {
            let fail_target = if delay > 0 { nn } else { 0 };
            row.push((fail_target, (1.0 - a) * reached));
            row.push((absorbing, a * reached));
        }
        rows.push(row);
    }
    for k in 0..delay {
        let next = if k + 1 < delay { nn + k + 1 } else { 0 };
        rows.push(vec![(next, 1.0)]);
    }
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

fn doubled_labels(base: &AbsorbingChain, delay: u32) -> Vec<StateLabel> {
    let m = base.len();
    let shared: Vec<Arc<StateLabel>> = base.labels().iter().cloned().map(Arc::new).collect();
    let mut labels: Vec<StateLabel> = pair_list(m)
        .into_iter()
        .map(|(k, l)| StateLabel::sym_pair(&shared[k as usize], &shared[l as usize]))
        .collect();
    let last = labels.pop().expect("at least one pair");
    labels.extend((1..=delay).map(StateLabel::Delay));
    let merged = match last.segment_count() {
        Some(n) => SegmentString::merged(n).into(),
        None => last,
    };
    labels.push(merged);
    labels
}

/// State count of the lumped doubling chain at level `d`:
/// `N_1 = 3`, `N_{d+1} = N_d (N_d + 1) / 2`.
pub fn doubling_lumped_size(d: u32) -> u128 {
    (0..d).fold(2u128, |n, _| n * (n + 1) / 2)
}

pub const MAX_LUMPED_LEVEL: u32 = 5;

/// Doubling scheme over `2^d` segments, lumped by exchanging the halves at
/// every level.
pub fn doubling_lumped(d: u32, p: f64, a: f64) -> Result<AbsorbingChain> {
    doubling_lumped_with(d, p, a, Representation::Auto)
}

/// As [`doubling_lumped`], choosing how the top level is held. Lower levels
/// are always materialized.
pub fn doubling_lumped_with(d: u32, p: f64, a: f64, top: Representation) -> Result<AbsorbingChain> {
    check_probability("a", a)?;
    if !(1..=MAX_LUMPED_LEVEL).contains(&d) {
        return Err(out_of_range("d", d, "lumped doubling needs 1 <= d <= 5"));
    }
    let mut chain = build_single_segment(p)?;
    for level in 1..=d {
        let repr = if level == d { top } else { Representation::Materialized };
        chain = symmetric_double_with(&chain, a, 0, repr)?;
    }
    Ok(chain)
}

/// Lumped doubling with announcement delays, level `i` waiting
/// `c_scale * 2^(i-1)` units after a failed swap.
pub fn cc_doubling_lumped(d: u32, p: f64, a: f64, c_scale: u32) -> Result<AbsorbingChain> {
    check_probability("a", a)?;
    if !(1..=4).contains(&d) {
        return Err(out_of_range("d", d, "lumped delayed doubling needs 1 <= d <= 4"));
    }
    if c_scale < 1 {
        return Err(out_of_range("c", c_scale, "delay scale must be at least 1"));
    }
    let mut chain = build_single_segment(p)?;
    for level in 1..=d {
        chain = symmetric_double(&chain, a, c_scale << (level - 1))?;
    }
    Ok(chain)
}

/// Partition of the unlumped doubling chain (complete scheme tree of depth
/// `d`) whose quotient is [`doubling_lumped`] in the same state order.
pub fn doubling_partition(d: u32) -> Result<Partition> {
    if !(1..=3).contains(&d) {
        return Err(out_of_range("d", d, "explicit doubling partition needs 1 <= d <= 3"));
    }
    // Class of every state of the single-segment chain, then refine level by level.
    let mut class: Vec<usize> = vec![0, 1];
    let mut classes = 2usize;
    for _ in 0..d {
        let n = class.len();
        let mut next = Vec::with_capacity(n * n);
        for &ci in &class {
            for &cj in &class {
                next.push(pair_index(ci, cj, classes));
            }
        }
        class = next;
        classes = classes * (classes + 1) / 2;
    }
    Partition::from_assignment(&class)
}
