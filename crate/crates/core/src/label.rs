//! Symbolic state labels.
//!
//! A repeater state is written as a string over `0`/`1` where groups of
//! swapped segments are wrapped in parentheses, so the overlined state
//! 1̄1̄0 is spelled `(11)0`. Auxiliary chains use age tuples `<0,2>`,
//! delay markers `*1`, ready counts `S3`, ordered products `[a;b]`,
//! unordered products `{a;b}` and lumped classes `{a,b,c}`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{out_of_range, Error, Result};

/// One block of a repeater string: an idle segment or a run of ready
/// segments that have been swapped into one (a run of length one is a plain
/// ready segment).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Zero,
    Ready(u32),
}

impl Block {
    fn width(self) -> u32 {
        match self {
            Block::Zero => 1,
            Block::Ready(len) => len,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SegmentString {
    blocks: Vec<Block>,
}

impl SegmentString {
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        if blocks.iter().any(|b| matches!(b, Block::Ready(0))) {
            return Err(Error::Parse("ready block of zero width".into()));
        }
        Ok(Self { blocks })
    }

    /// All segments idle.
    pub fn zeros(n: usize) -> Self {
        Self {
            blocks: vec![Block::Zero; n],
        }
    }

    /// All `n` segments swapped into a single end-to-end link.
    pub fn merged(n: usize) -> Self {
        Self {
            blocks: vec![Block::Ready(n as u32)],
        }
    }

    /// Label of a subset of ready segments where every maximal run of ready
    /// segments is one swapped block. Bit `n - 1 - j` of `mask` is segment `j`.
    pub fn from_ready_mask(mask: u64, n: usize) -> Self {
        let mut blocks = Vec::new();
        let mut run = 0u32;
        for j in 0..n {
            if mask >> (n - 1 - j) & 1 == 1 {
                run += 1;
            } else {
                if run > 0 {
                    blocks.push(Block::Ready(run));
                    run = 0;
                }
                blocks.push(Block::Zero);
            }
        }
        if run > 0 {
            blocks.push(Block::Ready(run));
        }
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn segments(&self) -> usize {
        self.blocks.iter().map(|b| b.width() as usize).sum()
    }

    pub fn concat(&self, other: &SegmentString) -> SegmentString {
        let mut blocks = self.blocks.clone();
        blocks.extend_from_slice(&other.blocks);
        SegmentString { blocks }
    }

    fn bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.segments());
        for b in &self.blocks {
            match *b {
                Block::Zero => out.push(0),
                Block::Ready(len) => out.extend(std::iter::repeat_n(1, len as usize)),
            }
        }
        out
    }

    fn ready_widths(&self) -> Vec<u32> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Ready(len) => Some(*len),
                Block::Zero => None,
            })
            .collect()
    }
}

impl Ord for SegmentString {
    /// Binary value of the ready pattern first, then the run widths, so the
    /// idle string sorts first and the fully swapped string last.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bits()
            .cmp(&other.bits())
            .then_with(|| self.ready_widths().cmp(&other.ready_widths()))
    }
}

impl PartialOrd for SegmentString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SegmentString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            match *b {
                Block::Zero => f.write_str("0")?,
                Block::Ready(1) => f.write_str("1")?,
                Block::Ready(len) => {
                    f.write_str("(")?;
                    for _ in 0..len {
                        f.write_str("1")?;
                    }
                    f.write_str(")")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StateLabel {
    Segments(SegmentString),
    /// Per-segment time since successful distribution.
    Ages(Vec<u32>),
    /// Classical-communication delay marker, 1-based.
    Delay(u32),
    /// Number of ready segments in a permutation-lumped chain.
    ReadyCount(u32),
    /// Ordered product of two sub-repeater states that cannot be flattened.
    Pair(Arc<StateLabel>, Arc<StateLabel>),
    /// Unordered product state of two identical halves.
    SymPair(Arc<StateLabel>, Arc<StateLabel>),
    /// Lumped group of states.
    Class(Vec<StateLabel>),
}

impl StateLabel {
    pub fn segments(s: SegmentString) -> Self {
        StateLabel::Segments(s)
    }

    /// Concatenation of left and right sub-repeater states.
    pub fn concat(left: &StateLabel, right: &StateLabel) -> Self {
        match (left, right) {
            (StateLabel::Segments(l), StateLabel::Segments(r)) => StateLabel::Segments(l.concat(r)),
            _ => StateLabel::Pair(Arc::new(left.clone()), Arc::new(right.clone())),
        }
    }

    /// State of a symmetric doubled repeater whose halves are in `left` and
    /// `right`, irrespective of which half is which.
    pub fn sym_pair(left: &Arc<StateLabel>, right: &Arc<StateLabel>) -> Self {
        if left == right {
            Self::concat(left, right)
        } else {
            StateLabel::SymPair(left.clone(), right.clone())
        }
    }

    /// Number of segments spanned, when the label determines it.
    pub fn segment_count(&self) -> Option<usize> {
        match self {
            StateLabel::Segments(s) => Some(s.segments()),
            StateLabel::Ages(a) => Some(a.len()),
            StateLabel::Pair(l, r) | StateLabel::SymPair(l, r) => {
                Some(l.segment_count()? + r.segment_count()?)
            }
            StateLabel::Class(members) => members.first()?.segment_count(),
            StateLabel::Delay(_) | StateLabel::ReadyCount(_) => None,
        }
    }
}

impl From<SegmentString> for StateLabel {
    fn from(s: SegmentString) -> Self {
        StateLabel::Segments(s)
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Segments(s) => write!(f, "{s}"),
            StateLabel::Ages(ages) => {
                f.write_str("<")?;
                for (i, a) in ages.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(">")
            }
            StateLabel::Delay(i) => write!(f, "*{i}"),
            StateLabel::ReadyCount(i) => write!(f, "S{i}"),
            StateLabel::Pair(l, r) => write!(f, "[{l};{r}]"),
            StateLabel::SymPair(l, r) => write!(f, "{{{l};{r}}}"),
            StateLabel::Class(members) => {
                f.write_str("{")?;
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{m}")?;
                }
                f.write_str("}")
            }
        }
    }
}

struct LabelParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> LabelParser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Parse(format!(
            "{msg} at byte {} of label `{}`",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("expected a number"))
    }

    fn label(&mut self) -> Result<StateLabel> {
        match self.peek() {
            Some(b'0') | Some(b'1') | Some(b'(') => self.segments(),
            Some(b'<') => {
                self.pos += 1;
                let mut ages = vec![self.number()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    ages.push(self.number()?);
                }
                self.expect(b'>')?;
                Ok(StateLabel::Ages(ages))
            }
            Some(b'*') => {
                self.pos += 1;
                Ok(StateLabel::Delay(self.number()?))
            }
            Some(b'S') => {
                self.pos += 1;
                Ok(StateLabel::ReadyCount(self.number()?))
            }
            Some(b'[') => {
                self.pos += 1;
                let l = self.label()?;
                self.expect(b';')?;
                let r = self.label()?;
                self.expect(b']')?;
                Ok(StateLabel::Pair(Arc::new(l), Arc::new(r)))
            }
            Some(b'{') => {
                self.pos += 1;
                let first = self.label()?;
                if self.peek() == Some(b';') {
                    self.pos += 1;
                    let second = self.label()?;
                    self.expect(b'}')?;
                    return Ok(StateLabel::SymPair(Arc::new(first), Arc::new(second)));
                }
                let mut members = vec![first];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    members.push(self.label()?);
                }
                self.expect(b'}')?;
                Ok(StateLabel::Class(members))
            }
            _ => Err(self.error("unexpected character")),
        }
    }

    fn segments(&mut self) -> Result<StateLabel> {
        let mut blocks = Vec::new();
        loop {
            match self.peek() {
                Some(b'0') => {
                    blocks.push(Block::Zero);
                    self.pos += 1;
                }
                Some(b'1') => {
                    blocks.push(Block::Ready(1));
                    self.pos += 1;
                }
                Some(b'(') => {
                    self.pos += 1;
                    let mut len = 0;
                    while self.peek() == Some(b'1') {
                        len += 1;
                        self.pos += 1;
                    }
                    if len < 2 {
                        return Err(self.error("swapped group needs at least two segments"));
                    }
                    self.expect(b')')?;
                    blocks.push(Block::Ready(len));
                }
                _ => break,
            }
        }
        Ok(StateLabel::Segments(SegmentString { blocks }))
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = LabelParser {
            src: s.as_bytes(),
            pos: 0,
        };
        let label = parser.label()?;
        if parser.pos != s.len() {
            return Err(parser.error("trailing characters"));
        }
        Ok(label)
    }
}

pub const MAX_ENUMERATED_SEGMENTS: usize = 12;

/// Every `n`-segment repeater state: all binary strings with every legal
/// grouping of adjacent ready segments. The idle state comes first and the
/// fully swapped state last.
pub fn enumerate_full_states(n: usize) -> Result<Vec<StateLabel>> {
    if n == 0 || n > MAX_ENUMERATED_SEGMENTS {
        return Err(out_of_range("n", n, "full enumeration needs 1 <= n <= 12"));
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    extend_states(n, &mut current, &mut out);
    out.sort();
    Ok(out.into_iter().map(StateLabel::Segments).collect())
}

fn extend_states(remaining: usize, current: &mut Vec<Block>, out: &mut Vec<SegmentString>) {
    if remaining == 0 {
        out.push(SegmentString {
            blocks: current.clone(),
        });
        return;
    }
    current.push(Block::Zero);
    extend_states(remaining - 1, current, out);
    current.pop();
    for len in 1..=remaining {
        current.push(Block::Ready(len as u32));
        extend_states(remaining - len, current, out);
        current.pop();
    }
}
