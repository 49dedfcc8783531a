use crate::builders::{check_nonzeros, check_states};
use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Result};
use crate::label::SegmentString;

pub const MAX_SUBSET_SEGMENTS: usize = 20;

/// Deterministic swapping: states are the sets of ready segments and a set
/// can only grow. Bit `n - 1 - j` of a state index marks segment `j` ready.
pub fn build_deterministic(n: usize, p: f64) -> Result<AbsorbingChain> {
    check_probability("p", p)?;
    if n == 0 || n > MAX_SUBSET_SEGMENTS {
        return Err(out_of_range("n", n, "deterministic chain needs 1 <= n <= 20"));
    }
    build_subset_chain(&vec![p; n])
}

/// Deterministic swapping with a distinct distribution probability per
/// segment.
pub fn build_asymmetric_deterministic(p_list: &[f64]) -> Result<AbsorbingChain> {
    if p_list.is_empty() || p_list.len() > MAX_SUBSET_SEGMENTS {
        return Err(out_of_range("p_list", p_list.len(), "needs between 1 and 20 segments"));
    }
    for &p in p_list {
        check_probability("p", p)?;
    }
    build_subset_chain(p_list)
}

fn build_subset_chain(ps: &[f64]) -> Result<AbsorbingChain> {
    let n = ps.len();
    let size = 1usize << n;
    check_states(size as u128)?;
    check_nonzeros(3u128.pow(n as u32))?;
    let full = size - 1;
    // ps are indexed by segment; bit positions count from the right.
    let bit_p: Vec<f64> = (0..n).map(|b| ps[n - 1 - b]).collect();

    let labels = (0..size)
        .map(|mask| SegmentString::from_ready_mask(mask as u64, n).into())
        .collect();
    let rows = (0..full).map(|from| {
        let free = full & !from;
        let mut row = Vec::new();
        let mut sub = free;
        loop {
            let mut prob = 1.0;
            for (b, &p) in bit_p.iter().enumerate() {
                if free >> b & 1 == 1 {
                    prob *= if sub >> b & 1 == 1 { p } else { 1.0 - p };
                }
            }
            if prob != 0.0 {
                row.push((from | sub, prob));
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
