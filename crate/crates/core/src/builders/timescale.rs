use crate::chain::{AbsorbingChain, EdgeMark};
use crate::error::{check_probability, out_of_range, Result};
use crate::label::SegmentString;

/// Two-segment chain that keeps the swap attempt as an explicit state, so
/// the restart after a failed swap is its own transition.
pub struct TwoTimescaleChain {
    pub chain: AbsorbingChain,
    /// The state `11` in which the swap is attempted; its outgoing
    /// transitions take no distribution time.
    pub swap_state: usize,
    /// The edge `11 -> 00` taken after a failed swap.
    pub restart_edge: (usize, usize),
}

impl TwoTimescaleChain {
    /// Marks for the total time `T = K tau + L tau'`: distribution attempts
    /// cost `tau`, the restart costs `tau'`, the successful swap is free.
    pub fn time_marks(&self, tau: f64, tau_prime: f64) -> Result<EdgeMark> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(out_of_range("tau", tau, "must be positive"));
        }
        let marks = EdgeMark::steps([self.swap_state]);
        let marks = EdgeMark {
            timed_default: tau,
            ..marks
        }
        .with_weight(self.restart_edge.0, self.restart_edge.1, tau_prime);
        marks.validate()?;
        Ok(marks)
    }

    /// Marks counting only restarts, the variable `L`.
    pub fn restart_marks(&self) -> EdgeMark {
        EdgeMark::uniform(0.0).with_weight(self.restart_edge.0, self.restart_edge.1, 1.0)
    }

    /// Marks counting only distribution attempts, the variable `K`.
    pub fn attempt_marks(&self) -> EdgeMark {
        EdgeMark::steps([self.swap_state])
    }
}

pub fn build_two_segment_restart(p: f64, a: f64) -> Result<TwoTimescaleChain> {
    check_probability("p", p)?;
    check_probability("a", a)?;
    let q = 1.0 - p;
    let labels = ["00", "01", "10", "11"]
        .iter()
        .map(|s| s.parse())
        .chain(std::iter::once(Ok(SegmentString::merged(2).into())))
        .collect::<Result<Vec<_>>>()?;
    let rows = [
        vec![(0, q * q), (1, p * q), (2, p * q), (3, p * p)],
        vec![(1, q), (3, p)],
        vec![(2, q), (3, p)],
        vec![(0, 1.0 - a), (4, a)],
    ];
    Ok(TwoTimescaleChain {
        chain: AbsorbingChain::from_transient_rows(labels, 1, rows)?,
        swap_state: 3,
        restart_edge: (3, 0),
    })
}
