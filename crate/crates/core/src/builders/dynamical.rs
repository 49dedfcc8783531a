use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Result};
use crate::label::SegmentString;

pub const MAX_DYNAMICAL_SEGMENTS: usize = 8;

/// A contiguous run of ready segments that has already been swapped into
/// one link. Positions count from segment 0 on the left.
#[derive(Clone, Copy)]
struct Run {
    start: usize,
    len: usize,
}

/// Dynamical scheme: swap whatever is ready as soon as possible.
///
/// One step distributes entanglement in every idle segment and then walks
/// once over the ready runs from left to right, swapping each run into the
/// one accumulated so far. A failed swap resets both participants and the
/// walk restarts from the next run. A state is the set of ready segments;
/// after the walk every maximal ready stretch is a single swapped run.
pub fn build_dynamical(n: usize, p: f64, a: f64) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    if !(2..=MAX_DYNAMICAL_SEGMENTS).contains(&n) {
        return Err(out_of_range("n", n, "dynamical chain needs 2 <= n <= 8"));
    }
    let size = 1usize << n;
    let full = size - 1;
    let labels = (0..size)
        .map(|mask| SegmentString::from_ready_mask(mask as u64, n).into())
        .collect();
    let rows = (0..full).map(|from| {
        let mut row = Vec::new();
        let free = full & !from;
        let mut sub = free;
        loop {
            let mut prob = 1.0;
            for b in 0..n {
                if free >> b & 1 == 1 {
                    prob *= if sub >> b & 1 == 1 { p } else { 1.0 - p };
                }
            }
            if prob != 0.0 {
                let runs = runs_after_distribution(from, sub, n);
                sweep(&runs, 0, None, 0, prob, a, n, &mut row);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        row
    });
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

fn bit(segment: usize, n: usize) -> usize {
    1 << (n - 1 - segment)
}

/// Existing swapped runs of `state` plus one fresh run per newly ready
/// segment, ordered left to right.
fn runs_after_distribution(state: usize, fresh: usize, n: usize) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut j = 0;
    while j < n {
        if fresh & bit(j, n) != 0 {
            runs.push(Run { start: j, len: 1 });
            j += 1;
        } else if state & bit(j, n) != 0 {
            let start = j;
            while j < n && state & bit(j, n) != 0 {
                j += 1;
            }
            runs.push(Run { start, len: j - start });
        } else {
            j += 1;
        }
    }
    runs
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    runs: &[Run],
    i: usize,
    current: Option<Run>,
    mask: usize,
    prob: f64,
    a: f64,
    n: usize,
    out: &mut Vec<(usize, f64)>,
) {
    let commit = |mask: usize, run: Option<Run>| match run {
        Some(r) => (r.start..r.start + r.len).fold(mask, |m, s| m | bit(s, n)),
        None => mask,
    };
    let Some(&next) = runs.get(i) else {
        out.push((commit(mask, current), prob));
        return;
    };
    match current {
        None => sweep(runs, i + 1, Some(next), mask, prob, a, n, out),
        Some(cur) if cur.start + cur.len == next.start => {
            let merged = Run {
                start: cur.start,
                len: cur.len + next.len,
            };
            if a > 0.0 {
                sweep(runs, i + 1, Some(merged), mask, prob * a, a, n, out);
            }
            if a < 1.0 {
                sweep(runs, i + 1, None, mask, prob * (1.0 - a), a, n, out);
            }
        }
        Some(cur) => sweep(runs, i + 1, Some(next), commit(mask, Some(cur)), prob, a, n, out),
    }
}
