//! Named repeater schemes and the chain each one is analysed with.

use std::fmt;
use std::str::FromStr;

use crate::builders::{
    build_asymmetric_deterministic, build_dynamical, build_finite_memory_deterministic, build_fixed_scheme,
    build_two_segment_cutoff, SchemeTree,
};
use crate::chain::{AbsorbingChain, Cutoff, RepeaterParams};
use crate::error::{out_of_range, Error, Result};
use crate::lumping::{cc_doubling_lumped, deterministic_lumped, doubling_lumped};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    FixedTree,
    Doubling,
    Dynamical,
    Deterministic,
    Asymmetric,
    TwoSegCutoff,
    FiniteMemory,
    CcDoubling,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::FixedTree,
        SchemeKind::Doubling,
        SchemeKind::Dynamical,
        SchemeKind::Deterministic,
        SchemeKind::Asymmetric,
        SchemeKind::TwoSegCutoff,
        SchemeKind::FiniteMemory,
        SchemeKind::CcDoubling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::FixedTree => "fixed-tree",
            SchemeKind::Doubling => "doubling",
            SchemeKind::Dynamical => "dynamical",
            SchemeKind::Deterministic => "deterministic",
            SchemeKind::Asymmetric => "asymmetric",
            SchemeKind::TwoSegCutoff => "two-seg-cutoff",
            SchemeKind::FiniteMemory => "finite-memory",
            SchemeKind::CcDoubling => "cc-doubling",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme `{s}`")))
    }
}

pub fn parse_cutoff(s: &str) -> Result<Cutoff> {
    match s {
        "inf" | "infinite" | "unbounded" => Ok(Cutoff::Unbounded),
        _ => s
            .parse::<u32>()
            .map(Cutoff::Finite)
            .map_err(|_| Error::Parse(format!("bad cutoff `{s}`, expected a positive integer or `inf`"))),
    }
}

/// A scheme together with everything needed to build its chain.
#[derive(Clone, Debug)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub params: RepeaterParams,
    /// Explicit composition order for `fixed-tree`; balanced when absent.
    pub tree: Option<SchemeTree>,
    /// Per-segment probabilities for `asymmetric`.
    pub p_list: Vec<f64>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, params: RepeaterParams) -> Self {
        Self {
            kind,
            params,
            tree: None,
            p_list: Vec::new(),
        }
    }

    /// Same scheme at another `(p, a)`.
    pub fn at(&self, p: f64, a: f64) -> Result<Self> {
        let mut s = self.clone();
        s.params.p = p;
        s.params.a = a;
        s.params.validate()?;
        Ok(s)
    }

    fn doubling_level(&self, max: u32) -> Result<u32> {
        let n = self.params.n;
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Unsupported(format!(
                "{} needs a power-of-two segment count, got n={n}",
                self.kind
            )));
        }
        let d = n.trailing_zeros();
        if d > max {
            return Err(Error::Unsupported(format!(
                "{} supported only for n <= {}",
                self.kind,
                1usize << max
            )));
        }
        Ok(d)
    }

    fn reject_cutoff(&self) -> Result<()> {
        let RepeaterParams { n, a, m, .. } = self.params;
        if m != Cutoff::Unbounded {
            if a < 1.0 && n != 2 {
                return Err(Error::Unsupported("cutoff with a<1 supported only for n=2".into()));
            }
            return Err(Error::Unsupported(format!(
                "{} has no memory cutoff; use two-seg-cutoff or finite-memory",
                self.kind
            )));
        }
        Ok(())
    }

    fn require_unit_swap(&self) -> Result<()> {
        if self.params.a != 1.0 {
            return Err(Error::Unsupported(format!(
                "{} models deterministic swapping and needs a=1",
                self.kind
            )));
        }
        Ok(())
    }

    /// Build the chain used for analysis, lumped where an exact
    /// compression exists.
    pub fn build(&self) -> Result<AbsorbingChain> {
        self.params.validate()?;
        let RepeaterParams { n, p, a, m, c, .. } = self.params;
        match self.kind {
            SchemeKind::FixedTree => {
                self.reject_cutoff()?;
                let tree = match &self.tree {
                    Some(t) => t.clone(),
                    None => SchemeTree::balanced(n)?,
                };
                if tree.leaves() != n {
                    return Err(out_of_range("tree", &tree, "leaf count must equal n"));
                }
                build_fixed_scheme(&tree, p, a)
            }
            SchemeKind::Doubling => {
                self.reject_cutoff()?;
                doubling_lumped(self.doubling_level(5)?, p, a)
            }
            SchemeKind::CcDoubling => {
                self.reject_cutoff()?;
                let d = self.doubling_level(4)?;
                cc_doubling_lumped(d, p, a, c.max(1))
            }
            SchemeKind::Dynamical => {
                self.reject_cutoff()?;
                build_dynamical(n, p, a)
            }
            SchemeKind::Deterministic => {
                self.reject_cutoff()?;
                self.require_unit_swap()?;
                deterministic_lumped(n, p)
            }
            SchemeKind::Asymmetric => {
                self.reject_cutoff()?;
                self.require_unit_swap()?;
                if self.p_list.is_empty() {
                    return Err(out_of_range("ps", "[]", "asymmetric needs per-segment probabilities"));
                }
                build_asymmetric_deterministic(&self.p_list)
            }
            SchemeKind::TwoSegCutoff => {
                if n != 2 {
                    return Err(Error::Unsupported("cutoff with a<1 supported only for n=2".into()));
                }
                match m {
                    Cutoff::Finite(m) => build_two_segment_cutoff(p, a, m),
                    Cutoff::Unbounded => build_fixed_scheme(&SchemeTree::balanced(2)?, p, a),
                }
            }
            SchemeKind::FiniteMemory => {
                if a < 1.0 {
                    return Err(Error::Unsupported(if n == 2 {
                        "finite-memory models deterministic swapping; use two-seg-cutoff for a<1".into()
                    } else {
                        "cutoff with a<1 supported only for n=2".to_string()
                    }));
                }
                match m {
                    Cutoff::Finite(m) => build_finite_memory_deterministic(n, p, m),
                    Cutoff::Unbounded => deterministic_lumped(n, p),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mean_absorption;

    fn spec(kind: &str, n: usize, p: f64, a: f64) -> SchemeSpec {
        SchemeSpec::new(kind.parse().unwrap(), RepeaterParams::new(n, p, a).unwrap())
    }

    #[test]
    fn names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("tree".parse::<SchemeKind>().is_err());
        assert_eq!(parse_cutoff("inf").unwrap(), Cutoff::Unbounded);
        assert_eq!(parse_cutoff("7").unwrap(), Cutoff::Finite(7));
        assert!(parse_cutoff("-1").is_err());
    }

    #[test]
    fn cutoff_constraint_message() {
        let mut s = spec("finite-memory", 4, 0.5, 0.5);
        s.params.m = Cutoff::Finite(3);
        let msg = s.build().unwrap_err().to_string();
        assert!(msg.contains("cutoff with a<1 supported only for n=2"), "{msg}");
        let mut s = spec("doubling", 4, 0.5, 0.5);
        s.params.m = Cutoff::Finite(3);
        assert!(matches!(s.build(), Err(Error::Unsupported(_))));
        assert!(spec("doubling", 6, 0.5, 0.5).build().is_err());
        assert!(spec("deterministic", 4, 0.5, 0.5).build().is_err());
    }

    #[test]
    fn two_segment_schemes_agree() {
        let m = |s: SchemeSpec| mean_absorption(&s.build().unwrap()).unwrap()[0];
        let fixed = m(spec("fixed-tree", 2, 0.5, 0.5));
        assert!((fixed - 16.0 / 3.0).abs() < 1e-12);
        assert!((m(spec("doubling", 2, 0.5, 0.5)) - fixed).abs() < 1e-12);
        assert!((m(spec("two-seg-cutoff", 2, 0.5, 0.5)) - fixed).abs() < 1e-12);
        assert!((m(spec("deterministic", 2, 0.5, 1.0)) - 8.0 / 3.0).abs() < 1e-12);
    }
}
