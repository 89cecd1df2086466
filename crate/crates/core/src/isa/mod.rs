//! Fluidic instruction set: program AST, `.dmf` parser, canonical serializer
//! and structural validation.
//!
//! A program is line oriented. Header lines declare the chip (`dim`,
//! `accuracy`, reservoirs, detectors, optional `tmax`), then every
//! `<t> <instr>+` line lists instructions that execute concurrently at tick
//! `t`. Recovery routines are `recovery <id>:` blocks closed by
//! `endrecovery`.

mod parse;
mod serialize;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

pub use parse::{parse_program, parse_program_bytes, parse_unvalidated, ParseError, SyntaxError};
pub use serialize::serialize_program;
pub use validate::{validate_structure, SemanticError, SemanticKind};

/// A cell address, 1-based in both coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Loc {
    pub row: u32,
    pub col: u32,
}

impl Loc {
    pub const fn new(row: u32, col: u32) -> Self {
        Loc { row, col }
    }

    /// Chebyshev distance; two droplets touch when this is at most 1.
    pub fn chebyshev(self, other: Loc) -> u32 {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    pub fn manhattan(self, other: Loc) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// Signed offset by `(dr, dc)`; `None` when it would leave the positive quadrant.
    pub fn offset(self, dr: i64, dc: i64) -> Option<Loc> {
        let r = self.row as i64 + dr;
        let c = self.col as i64 + dc;
        (r >= 1 && c >= 1).then(|| Loc::new(r as u32, c as u32))
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ReservoirKind {
    Reagent(String),
    Output,
    Waste,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReservoirDecl {
    pub loc: Loc,
    pub kind: ReservoirKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipHeader {
    pub rows: u32,
    pub cols: u32,
    /// Number of fractional bits used to report concentration factors.
    pub accuracy: u32,
    pub reservoirs: Vec<ReservoirDecl>,
}

impl ChipHeader {
    /// Reagent names in declaration order, deduplicated. This fixes the
    /// component order of every concentration vector on the chip.
    pub fn reagents(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.reservoirs {
            if let ReservoirKind::Reagent(name) = &r.kind {
                if !names.contains(name) {
                    names.push(name.clone());
                }
            }
        }
        names
    }

    pub fn in_bounds(&self, loc: Loc) -> bool {
        (1..=self.rows).contains(&loc.row) && (1..=self.cols).contains(&loc.col)
    }
}

/// Linear mixer shapes. Both hold their droplets at the two ends of a
/// four-cell strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MixerType {
    /// 1x4, horizontal.
    H14,
    /// 4x1, vertical.
    V41,
}

impl MixerType {
    pub fn code(self) -> u32 {
        match self {
            MixerType::H14 => 14,
            MixerType::V41 => 41,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            14 => Some(MixerType::H14),
            41 => Some(MixerType::V41),
            _ => None,
        }
    }

    /// Whether `a` and `b` sit at the two ends of this mixer's strip.
    pub fn fits(self, a: Loc, b: Loc) -> bool {
        match self {
            MixerType::H14 => a.row == b.row && a.col.abs_diff(b.col) == 3,
            MixerType::V41 => a.col == b.col && a.row.abs_diff(b.row) == 3,
        }
    }

    /// All four cells of the strip spanned by `a`..`b`, assuming [`fits`](Self::fits).
    pub fn span(self, a: Loc, b: Loc) -> Vec<Loc> {
        match self {
            MixerType::H14 => (a.col.min(b.col)..=a.col.max(b.col))
                .map(|c| Loc::new(a.row, c))
                .collect(),
            MixerType::V41 => (a.row.min(b.row)..=a.row.max(b.row))
                .map(|r| Loc::new(r, a.col))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Dispense(Loc),
    Move { src: Loc, dst: Loc },
    MixStart { a: Loc, b: Loc, t_mix: u32, mtype: MixerType },
    Waste(Loc),
    Output(Loc),
    DetectStart(String),
    CondCall { detector: String, recovery: String },
    End,
}

impl Instruction {
    /// Compact rendering used in diagnostics, e.g. `m(11,8,12,8)` or
    /// `mix(11,4,11,7,6,14)`.
    pub fn compact(&self) -> String {
        match self {
            Instruction::Dispense(l) => format!("d({},{})", l.row, l.col),
            Instruction::Move { src, dst } => {
                format!("m({},{},{},{})", src.row, src.col, dst.row, dst.col)
            }
            Instruction::MixStart { a, b, t_mix, mtype } => format!(
                "mix({},{},{},{},{},{})",
                a.row,
                a.col,
                b.row,
                b.col,
                t_mix,
                mtype.code()
            ),
            Instruction::Waste(l) => format!("waste({},{})", l.row, l.col),
            Instruction::Output(l) => format!("output({},{})", l.row, l.col),
            Instruction::DetectStart(d) => format!("detect({d})"),
            Instruction::CondCall { detector, recovery } => format!("if({detector})call({recovery})"),
            Instruction::End => "end".to_string(),
        }
    }
}

impl fmt::Display for Instruction {
    /// Canonical (arrow) form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Move { src, dst } => {
                write!(f, "m([{},{}]->[{},{}])", src.row, src.col, dst.row, dst.col)
            }
            Instruction::MixStart { a, b, t_mix, mtype } => write!(
                f,
                "mix([{},{}]<->[{},{}],{},{})",
                a.row,
                a.col,
                b.row,
                b.col,
                t_mix,
                mtype.code()
            ),
            other => f.write_str(&other.compact()),
        }
    }
}

/// One program line: instructions issued together at tick `t`.
#[derive(Debug, Clone, Eq)]
pub struct TimedLine {
    pub t: u32,
    pub instrs: Vec<Instruction>,
    /// 1-based source line, 0 when the line was synthesized.
    pub line: usize,
}

impl TimedLine {
    pub fn new(t: u32, instrs: Vec<Instruction>) -> Self {
        TimedLine { t, instrs, line: 0 }
    }
}

// Source positions are provenance, not content.
impl PartialEq for TimedLine {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.instrs == other.instrs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorDecl {
    pub id: String,
    pub loc: Loc,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub header: ChipHeader,
    pub main: Vec<TimedLine>,
    pub detectors: Vec<DetectorDecl>,
    pub recoveries: BTreeMap<String, Vec<TimedLine>>,
    pub t_max: Option<u32>,
}

impl Program {
    pub fn detector(&self, id: &str) -> Option<&DetectorDecl> {
        self.detectors.iter().find(|d| d.id == id)
    }

    /// Number of conditional recovery calls on the main timeline.
    pub fn conditional_count(&self) -> usize {
        self.main
            .iter()
            .flat_map(|l| &l.instrs)
            .filter(|i| matches!(i, Instruction::CondCall { .. }))
            .count()
    }

    /// Timestamp of the last main line, 0 for an empty program.
    pub fn last_tick(&self) -> u32 {
        self.main.last().map_or(0, |l| l.t)
    }
}
