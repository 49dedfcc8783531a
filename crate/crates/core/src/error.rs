use thiserror::Error;

/// Errors produced while building or analysing repeater chains.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range: {constraint}")]
    OutOfRange {
        name: &'static str,
        value: String,
        constraint: &'static str,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("chain would have {requested} {what}, above the cap of {cap}")]
    SizeLimit {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("operation requires a single absorbing state, chain has {0}")]
    MultipleAbsorbing(usize),

    #[error("malformed chain: {0}")]
    MalformedChain(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error(
        "partition is not lumpable: states {state_a} and {state_b} of group {group} \
         send {mass_a} vs {mass_b} into group {target}"
    )]
    NotLumpable {
        group: usize,
        target: usize,
        state_a: usize,
        state_b: usize,
        mass_a: f64,
        mass_b: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: value.to_string(),
            constraint: "must lie in (0, 1]",
        })
    }
}

pub(crate) fn out_of_range(name: &'static str, value: impl ToString, constraint: &'static str) -> Error {
    Error::OutOfRange {
        name,
        value: value.to_string(),
        constraint,
    }
}
