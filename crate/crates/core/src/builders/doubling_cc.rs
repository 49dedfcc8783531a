use crate::builders::fixed::{merged_label, require_materialized_single};
use crate::builders::{build_single_segment, check_states};
use crate::chain::AbsorbingChain;
use crate::error::{check_probability, out_of_range, Result};
use crate::label::StateLabel;

/// Double a repeater, spending `c` extra time units to announce a failed
/// outermost swap.
///
/// States are the ordered pairs of base states (except the joint absorbing
/// pair), then the delay states `*1..*c`, then the absorbing state. A failed
/// swap leads to `*1`, the delay states advance one per step and `*c`
/// returns to the initial pair.
pub fn double_with_cc(base: &AbsorbingChain, a: f64, c: u32) -> Result<AbsorbingChain> {
    check_probability("a", a)?;
    require_materialized_single(base)?;
    if c < 1 {
        return Err(out_of_range("c", c, "delay must be at least 1; use combine_fixed without delay"));
    }
    let nb = base.len();
    let c = c as usize;
    check_states(nb as u128 * nb as u128 + c as u128)?;
    let pairs = nb * nb - 1;
    let total = pairs + c + 1;
    let absorbing = total - 1;
    let base_abs = nb - 1;

    let mut labels = Vec::with_capacity(total);
    for li in base.labels() {
        for rj in base.labels() {
            labels.push(StateLabel::concat(li, rj));
        }
    }
    labels.pop();
    labels.extend((1..=c as u32).map(StateLabel::Delay));
    let last_label = &base.labels()[base_abs];
    labels.push(merged_label(last_label, last_label));

    let base_rows: Vec<Vec<(usize, f64)>> = (0..nb).map(|i| base.row(i)).collect();
    let mut rows = Vec::with_capacity(absorbing);
    for s in 0..pairs {
        let (i, j) = (s / nb, s % nb);
        let mut row = Vec::new();
        let mut reached = 0.0;
        for &(k, pk) in &base_rows[i] {
            for &(l, pl) in &base_rows[j] {
                if k == base_abs && l == base_abs {
                    reached += pk * pl;
                } else {
                    row.push((k * nb + l, pk * pl));
                }
            }
        }
        if reached != 0.0 {
            row.push((pairs, (1.0 - a) * reached));
            row.push((absorbing, a * reached));
        }
        rows.push(row);
    }
    for k in 0..c {
        let next = if k + 1 < c { pairs + k + 1 } else { 0 };
        rows.push(vec![(next, 1.0)]);
    }
    AbsorbingChain::from_transient_rows(labels, 1, rows)
}

/// Doubling repeater over `2^d` segments with announcement delays at every
/// level: level `i` waits `c_scale * 2^(i-1)` units after a failed swap.
pub fn build_cc_doubling(d: u32, p: f64, a: f64, c_scale: u32) -> Result<AbsorbingChain> {
    if d > 5 {
        return Err(out_of_range("d", d, "delayed doubling chain needs d <= 5"));
    }
    if c_scale < 1 {
        return Err(out_of_range("c", c_scale, "delay scale must be at least 1"));
    }
    let mut chain = build_single_segment(p)?;
    for level in 1..=d {
        chain = double_with_cc(&chain, a, c_scale << (level - 1))?;
    }
    Ok(chain)
}
