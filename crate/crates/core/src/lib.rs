//! Waiting-time statistics for quantum repeater chains.
//!
//! Repeaters are modelled as absorbing Markov chains whose absorption time is
//! the number of elementary time steps until end-to-end entanglement exists.

pub mod analysis;
pub mod builders;
pub mod chain;
#[cfg(feature = "cli")]
pub mod cli;
pub mod closed_forms;
pub mod error;
pub mod label;
pub mod lumping;
pub mod montecarlo;
pub mod scheme;
pub mod solve;
pub mod sparse;
mod structured;

pub use chain::{validate_chain, AbsorbingChain, Cutoff, EdgeMark, RepeaterParams, Violation, WaitingStats};
pub use error::{Error, Result};
pub use label::{enumerate_full_states, Block, SegmentString, StateLabel};
