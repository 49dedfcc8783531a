use std::collections::HashMap;

use crate::builders::check_states;
use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Error, Result};
use crate::label::{SegmentString, StateLabel};

/// Two segments with arbitrary swap probability and memory cutoff `m`.
///
/// States are `<0,0>`, then `<0,i>` (right segment ready for `i` steps),
/// then `<i,0>`, then the swapped `(11)`. A segment that has waited `m`
/// steps is reset.
pub fn build_two_segment_cutoff(p: f64, a: f64, m: u32) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    if m < 1 {
        return Err(out_of_range("m", m, "cutoff must be at least 1"));
    }
    let m = m as usize;
    check_states(2 * m as u128 + 2)?;
    let q = 1.0 - p;
    let absorbing = 2 * m + 1;

    let mut labels = vec![StateLabel::Ages(vec![0, 0])];
    labels.extend((1..=m).map(|i| StateLabel::Ages(vec![0, i as u32])));
    labels.extend((1..=m).map(|i| StateLabel::Ages(vec![i as u32, 0])));
    labels.push(SegmentString::merged(2).into());

    let mut rows = Vec::with_capacity(2 * m + 1);
    rows.push(vec![
        (0, q * q + (1.0 - a) * p * p),
        (1, p * q),
        (m + 1, p * q),
        (absorbing, a * p * p),
    ]);
    for offset in [0, m] {
        for i in 1..=m {
            let aged = if i < m { offset + i + 1 } else { 0 };
            rows.push(vec![(0, (1.0 - a) * p), (aged, q), (absorbing, a * p)]);
        }
    }
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

/// `(total, transient, absorbing)` state counts of the finite-memory chain:
/// `(m+1)^n - (m-1)^n`, `(m+1)^n - m^n` and `m^n - (m-1)^n`.
pub fn finite_memory_counts(n: usize, m: u32) -> Option<(u128, u128, u128)> {
    let n = u32::try_from(n).ok()?;
    let m = m as u128;
    let hi = (m + 1).checked_pow(n)?;
    let mid = m.checked_pow(n)?;
    let lo = (m - 1).checked_pow(n)?;
    Some((hi - lo, hi - mid, mid - lo))
}

/// Deterministic swapping with memory cutoff `m` over `n` segments.
///
/// States are age tuples, each component counting steps since that segment
/// became ready (0 = not ready). Tuples without a zero are absorbing; the
/// chain has several absorbing states.
pub fn build_finite_memory_deterministic(n: usize, p: f64, m: u32) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    if n < 2 {
        return Err(out_of_range("n", n, "finite-memory chain needs n >= 2"));
    }
    if m < 1 {
        return Err(out_of_range("m", m, "cutoff must be at least 1"));
    }
    let (total, _, _) = finite_memory_counts(n, m).ok_or(Error::SizeLimit {
        what: "states",
        requested: u128::MAX,
        cap: super::max_states() as u128,
    })?;
    check_states(total)?;
    let q = 1.0 - p;

    let mut transient = Vec::new();
    let mut absorbing = Vec::new();
    let mut tuple = vec![0u32; n];
    loop {
        let has_zero = tuple.contains(&0);
        if has_zero {
            transient.push(tuple.clone());
        } else if tuple.contains(&1) {
            absorbing.push(tuple.clone());
        }
        // Odometer increment, last component fastest.
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if tuple[k] < m {
                tuple[k] += 1;
                break;
            }
            tuple[k] = 0;
        }
        if tuple.iter().all(|&x| x == 0) {
            break;
        }
    }
    let n0 = transient.len();
    let index: HashMap<Vec<u32>, usize> = transient
        .iter()
        .chain(&absorbing)
        .cloned()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();

    let rows = transient.iter().map(|t| {
        let zeros: Vec<usize> = (0..n).filter(|&j| t[j] == 0).collect();
        let nz = zeros.len() as i32;
        if t.contains(&m) {
            let completed: Vec<u32> = t.iter().map(|&x| if x == 0 { 1 } else { x }).collect();
            let all = p.powi(nz);
            return vec![(index[&completed], all), (0, 1.0 - all)];
        }
        let mut row = Vec::with_capacity(1 << zeros.len());
        for sub in 0..(1usize << zeros.len()) {
            let mut next: Vec<u32> = t.iter().map(|&x| if x > 0 { x + 1 } else { 0 }).collect();
            let mut prob = 1.0;
            for (b, &j) in zeros.iter().enumerate() {
                if sub >> b & 1 == 1 {
                    next[j] = 1;
                    prob *= p;
                } else {
                    prob *= q;
                }
            }
            if prob != 0.0 {
                row.push((index[&next], prob));
            }
        }
        row
    });
    let rows: Vec<_> = rows.collect();
    let labels = transient
        .iter()
        .chain(&absorbing)
        .map(|t| StateLabel::Ages(t.clone()))
        .collect();
    debug_assert_eq!(rows.len(), n0);
    AbsorbingChain::from_transient_rows(labels, absorbing.len(), rows)
}
