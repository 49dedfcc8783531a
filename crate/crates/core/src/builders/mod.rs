//! Chain constructors for every repeater configuration.

mod cutoff;
mod deterministic;
mod doubling_cc;
mod dynamical;
mod fixed;
mod timescale;

pub use cutoff::{build_finite_memory_deterministic, build_two_segment_cutoff, finite_memory_counts};
pub use deterministic::{build_asymmetric_deterministic, build_deterministic};
pub use doubling_cc::{build_cc_doubling, double_with_cc};
pub use dynamical::build_dynamical;
pub use fixed::{build_fixed_scheme, build_single_segment, combine_fixed, SchemeTree};
pub use timescale::{build_two_segment_restart, TwoTimescaleChain};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_STATES: usize = 1 << 20;
/// Stored transition entries allowed in one chain. The subset chains of the
/// deterministic family have `3^n` nonzeros, which outgrows memory long
/// before their `2^n` states hit the state cap.
pub const DEFAULT_MAX_NONZEROS: usize = 1 << 26;

/// State cap for builders, overridable through `QRWT_MAX_STATES`.
pub fn max_states() -> usize {
    std::env::var("QRWT_MAX_STATES")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_STATES)
}

pub(crate) fn check_states(requested: u128) -> Result<()> {
    let cap = max_states() as u128;
    if requested > cap {
        return Err(Error::SizeLimit {
            what: "states",
            requested,
            cap,
        });
    }
    Ok(())
}

pub(crate) fn check_nonzeros(requested: u128) -> Result<()> {
    let cap = DEFAULT_MAX_NONZEROS as u128;
    if requested > cap {
        return Err(Error::SizeLimit {
            what: "transition entries",
            requested,
            cap,
        });
    }
    Ok(())
}
