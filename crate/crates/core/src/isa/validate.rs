use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::{Instruction, Loc, Program, TimedLine};

/// A broken program invariant. `line` is the 1-based source line, or 0 for
/// header-level problems and synthesized lines.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct SemanticError {
    pub line: usize,
    pub kind: SemanticKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticKind {
    EmptyGrid,
    ZeroAccuracy,
    NoReagent,
    DuplicateReservoir(Loc),
    OutOfBounds(Loc),
    DuplicateDetector(String),
    ZeroDetectorDuration(String),
    NonMonotonicTime(u32),
    EmptyLine(u32),
    MoveNotAdjacent { src: Loc, dst: Loc },
    ZeroMixTime,
    MisplacedEnd,
    UndeclaredDetector(String),
    UndeclaredRecovery(String),
    TmaxBeforeEnd { t_max: u32, last: u32 },
}

impl fmt::Display for SemanticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticKind::EmptyGrid => write!(f, "chip dimensions must be positive"),
            SemanticKind::ZeroAccuracy => write!(f, "accuracy must be at least 1"),
            SemanticKind::NoReagent => write!(f, "no reagent reservoir declared"),
            SemanticKind::DuplicateReservoir(l) => write!(f, "two reservoirs declared at {l}"),
            SemanticKind::OutOfBounds(l) => write!(f, "{l} lies outside the chip"),
            SemanticKind::DuplicateDetector(d) => write!(f, "detector `{d}` declared twice"),
            SemanticKind::ZeroDetectorDuration(d) => write!(f, "detector `{d}` has zero duration"),
            SemanticKind::NonMonotonicTime(t) => write!(f, "timestamp {t} does not increase"),
            SemanticKind::EmptyLine(t) => write!(f, "line at t={t} has no instructions"),
            SemanticKind::MoveNotAdjacent { src, dst } => {
                write!(f, "move {src} -> {dst} is not to a 4-neighbor")
            }
            SemanticKind::ZeroMixTime => write!(f, "mix time must be at least 1"),
            SemanticKind::MisplacedEnd => write!(f, "`end` may only close the final main line"),
            SemanticKind::UndeclaredDetector(d) => write!(f, "undeclared detector `{d}`"),
            SemanticKind::UndeclaredRecovery(r) => write!(f, "undeclared recovery `{r}`"),
            SemanticKind::TmaxBeforeEnd { t_max, last } => {
                write!(f, "tmax {t_max} precedes the last timestamp {last}")
            }
        }
    }
}

/// Checks every structural invariant of `p`. Returns an empty list iff the
/// program is well formed; errors are ordered by source position.
pub fn validate_structure(p: &Program) -> Vec<SemanticError> {
    let mut errs = Vec::new();
    let h = &p.header;
    let mut push = |line: usize, kind: SemanticKind| errs.push(SemanticError { line, kind });

    if h.rows == 0 || h.cols == 0 {
        push(0, SemanticKind::EmptyGrid);
    }
    if h.accuracy == 0 {
        push(0, SemanticKind::ZeroAccuracy);
    }
    if h.reagents().is_empty() {
        push(0, SemanticKind::NoReagent);
    }
    let mut seen = HashSet::new();
    for r in &h.reservoirs {
        if !h.in_bounds(r.loc) {
            push(0, SemanticKind::OutOfBounds(r.loc));
        }
        if !seen.insert(r.loc) {
            push(0, SemanticKind::DuplicateReservoir(r.loc));
        }
    }
    let mut ids = HashSet::new();
    for d in &p.detectors {
        if !ids.insert(d.id.as_str()) {
            push(0, SemanticKind::DuplicateDetector(d.id.clone()));
        }
        if d.duration == 0 {
            push(0, SemanticKind::ZeroDetectorDuration(d.id.clone()));
        }
        if !h.in_bounds(d.loc) {
            push(0, SemanticKind::OutOfBounds(d.loc));
        }
    }

    check_timeline(p, &p.main, true, &mut push);
    for lines in p.recoveries.values() {
        check_timeline(p, lines, false, &mut push);
    }

    if let Some(t_max) = p.t_max {
        let last = p.last_tick();
        if t_max < last {
            push(0, SemanticKind::TmaxBeforeEnd { t_max, last });
        }
    }
    errs.sort_by_key(|e| e.line);
    errs
}

fn check_timeline(
    p: &Program,
    lines: &[TimedLine],
    is_main: bool,
    push: &mut impl FnMut(usize, SemanticKind),
) {
    let h = &p.header;
    let mut prev: Option<u32> = None;
    for (li, line) in lines.iter().enumerate() {
        if prev.is_some_and(|t| line.t <= t) {
            push(line.line, SemanticKind::NonMonotonicTime(line.t));
        }
        prev = Some(line.t);
        if line.instrs.is_empty() {
            push(line.line, SemanticKind::EmptyLine(line.t));
        }
        let last_line = is_main && li + 1 == lines.len();
        for (ii, instr) in line.instrs.iter().enumerate() {
            let mut bounds = |loc: Loc| {
                if !h.in_bounds(loc) {
                    push(line.line, SemanticKind::OutOfBounds(loc));
                }
            };
            match instr {
                Instruction::Dispense(l) | Instruction::Waste(l) | Instruction::Output(l) => bounds(*l),
                Instruction::Move { src, dst } => {
                    bounds(*src);
                    bounds(*dst);
                    if src.manhattan(*dst) != 1 {
                        push(line.line, SemanticKind::MoveNotAdjacent { src: *src, dst: *dst });
                    }
                }
                Instruction::MixStart { a, b, t_mix, .. } => {
                    bounds(*a);
                    bounds(*b);
                    if *t_mix == 0 {
                        push(line.line, SemanticKind::ZeroMixTime);
                    }
                }
                Instruction::DetectStart(d) => {
                    if p.detector(d).is_none() {
                        push(line.line, SemanticKind::UndeclaredDetector(d.clone()));
                    }
                }
                Instruction::CondCall { detector, recovery } => {
                    if p.detector(detector).is_none() {
                        push(line.line, SemanticKind::UndeclaredDetector(detector.clone()));
                    }
                    if !p.recoveries.contains_key(recovery) {
                        push(line.line, SemanticKind::UndeclaredRecovery(recovery.clone()));
                    }
                }
                Instruction::End => {
                    if !(last_line && ii + 1 == line.instrs.len()) {
                        push(line.line, SemanticKind::MisplacedEnd);
                    }
                }
            }
        }
    }
}
