//! Deterministic error injection into clean programs.
//!
//! Each mutation targets one error class and picks the first applicable
//! site in a fixed search order, so the same input always yields the same
//! mutant.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::chip::ChipState;
use crate::diag::Code;
use crate::fluidics::{e_cells, verify_program, Trace, VerifyOptions};
use crate::graph::{conformance, reconstruct, ConformOptions};
use crate::isa::{parse_program, parse_unvalidated, serialize_program, Instruction, Loc, Program, ReservoirKind, TimedLine};
use crate::pins::PinMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectKind {
    /// Move next to a resting droplet.
    E1,
    /// Two simultaneous moves that end side by side.
    E2,
    /// Dispense from a cell that is not a reservoir.
    E3,
    /// Move a droplet out of a running mixer.
    E4,
    /// Start a mix one tick before its inputs arrive.
    E5,
    /// Halve a mixing time.
    E6,
    /// Interchange two reagent reservoirs.
    E7,
    /// Give two electrodes near a moving droplet the same pin.
    Pins,
    /// Hand-written replacement of one line.
    Substitute,
}

impl FromStr for InjectKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "e1" => InjectKind::E1,
            "e2" => InjectKind::E2,
            "e3" => InjectKind::E3,
            "e4" => InjectKind::E4,
            "e5" => InjectKind::E5,
            "e6" => InjectKind::E6,
            "e7" => InjectKind::E7,
            "pins" | "pin" => InjectKind::Pins,
            other => return Err(format!("unknown injection `{other}` (e1..e7, pins)")),
        })
    }
}

impl fmt::Display for InjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InjectKind::E1 => "e1",
            InjectKind::E2 => "e2",
            InjectKind::E3 => "e3",
            InjectKind::E4 => "e4",
            InjectKind::E5 => "e5",
            InjectKind::E6 => "e6",
            InjectKind::E7 => "e7",
            InjectKind::Pins => "pins",
            InjectKind::Substitute => "substitute",
        };
        f.write_str(s)
    }
}

impl InjectKind {
    /// Code the mutant is expected to raise.
    pub fn expected_code(self) -> Option<Code> {
        Some(match self {
            InjectKind::E1 => Code::E1,
            InjectKind::E2 => Code::E2,
            InjectKind::E3 => Code::E3,
            InjectKind::E4 => Code::E4,
            InjectKind::E5 => Code::E5,
            InjectKind::E6 => Code::E6,
            InjectKind::E7 => Code::E7,
            InjectKind::Pins | InjectKind::Substitute => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("no site for {kind}: {reason}")]
    MutationInapplicable { kind: InjectKind, reason: String },
}

#[derive(Debug, Clone)]
pub struct Mutation {
    pub program: Program,
    /// Companion pin map for pin mutations.
    pub pins: Option<PinMap>,
    /// Human-readable summary of the edit.
    pub summary: String,
}

fn inapplicable(kind: InjectKind, reason: &str) -> InjectError {
    InjectError::MutationInapplicable { kind, reason: reason.to_string() }
}

/// Applies `kind` to `p`. `pins` is the base map for pin mutations and
/// defaults to one pin per electrode.
pub fn inject(p: &Program, kind: InjectKind, pins: Option<&PinMap>) -> Result<Mutation, InjectError> {
    if p.main.iter().all(|l| l.instrs.iter().all(|i| matches!(i, Instruction::End))) {
        return Err(inapplicable(kind, "program has no instructions"));
    }
    match kind {
        InjectKind::E1 => inject_e1(p),
        InjectKind::E2 => inject_e2(p),
        InjectKind::E3 => inject_e3(p),
        InjectKind::E4 => inject_e4(p),
        InjectKind::E5 => inject_e5(p),
        InjectKind::E6 => inject_e6(p),
        InjectKind::E7 => inject_e7(p),
        InjectKind::Pins => inject_pins(p, pins),
        InjectKind::Substitute => Err(inapplicable(kind, "use `substitute` with a tick and instructions")),
    }
}

fn clean_trace(p: &Program, kind: InjectKind) -> Result<Trace, InjectError> {
    let (trace, report) = verify_program(p, &VerifyOptions::default());
    if !report.passed() {
        return Err(inapplicable(kind, "program does not verify cleanly"));
    }
    Ok(trace)
}

fn is_move(i: &Instruction) -> Option<(Loc, Loc)> {
    match i {
        Instruction::Move { src, dst } => Some((*src, *dst)),
        _ => None,
    }
}

/// Droplet locations touched by a line: sources of moves and removals, and
/// mix endpoints.
fn touched(line: &TimedLine) -> BTreeSet<Loc> {
    let mut s = BTreeSet::new();
    for i in &line.instrs {
        match i {
            Instruction::Move { src, .. } => {
                s.insert(*src);
            }
            Instruction::MixStart { a, b, .. } => {
                s.insert(*a);
                s.insert(*b);
            }
            Instruction::Waste(l) | Instruction::Output(l) => {
                s.insert(*l);
            }
            _ => {}
        }
    }
    s
}

/// Droplets that are neither held by a mixer or detector nor used by `line`.
fn idle(state: &ChipState, line: &TimedLine) -> Vec<Loc> {
    let used = touched(line);
    state
        .droplets()
        .map(|d| d.loc)
        .filter(|&l| state.mixer_holding(l).is_none() && state.detection_at(l).is_none() && !used.contains(&l))
        .collect()
}

fn near_mixer(state: &ChipState, loc: Loc) -> bool {
    state.mixers.iter().any(|m| m.span().iter().any(|&c| c.chebyshev(loc) <= 1))
}

fn steps(state: &ChipState, from: Loc) -> Vec<Loc> {
    state.dims().neighbors4(from)
}

fn body_lines(p: &Program) -> impl DoubleEndedIterator<Item = (usize, &TimedLine)> {
    p.main
        .iter()
        .enumerate()
        .filter(|(_, l)| l.instrs.iter().any(|i| !matches!(i, Instruction::End | Instruction::CondCall { .. })))
}

fn append(p: &Program, li: usize, ins: Instruction) -> Program {
    let mut q = p.clone();
    q.main[li].instrs.push(ins);
    q
}

/// Latest line first: an idle droplet takes one step so that a resting
/// droplet lies just beyond its destination.
fn inject_e1(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E1;
    let trace = clean_trace(p, kind)?;
    for (li, line) in body_lines(p).rev() {
        let s = trace.state_before(line.t);
        let still = idle(&s, line);
        for &src in &still {
            for dst in steps(&s, src) {
                if s.grid.get(dst) || s.reagent_at(dst).is_some() || near_mixer(&s, dst) {
                    continue;
                }
                let hit = e_cells(&s, src, dst).into_iter().any(|c| c != src && still.contains(&c));
                if hit {
                    let ins = Instruction::Move { src, dst };
                    let summary = format!("t={}: added {}", line.t, ins.compact());
                    return Ok(Mutation { program: append(p, li, ins), pins: None, summary });
                }
            }
        }
    }
    Err(inapplicable(kind, "no idle droplet can step toward a resting one"))
}

/// Latest line first: for each move of the line, an idle droplet steps next
/// to the mover's destination with the mover's source just beyond.
fn inject_e2(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E2;
    let trace = clean_trace(p, kind)?;
    for (li, line) in body_lines(p).rev() {
        let s = trace.state_before(line.t);
        let still = idle(&s, line);
        for (msrc, mdst) in line.instrs.iter().filter_map(is_move) {
            for &src in &still {
                for dst in steps(&s, src) {
                    if dst == mdst || s.grid.get(dst) || dst.chebyshev(mdst) > 1 || near_mixer(&s, dst) {
                        continue;
                    }
                    let triple = e_cells(&s, src, dst);
                    if triple.contains(&msrc) && !triple.iter().any(|c| *c != src && still.contains(c)) {
                        let ins = Instruction::Move { src, dst };
                        let summary = format!("t={}: added {}", line.t, ins.compact());
                        return Ok(Mutation { program: append(p, li, ins), pins: None, summary });
                    }
                }
            }
        }
    }
    Err(inapplicable(kind, "no idle droplet can converge on a moving one"))
}

/// First dispense moves to the first neighboring cell that is not a
/// reservoir, trying up, down, left, right.
fn inject_e3(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E3;
    let dims = crate::chip::Dims { rows: p.header.rows, cols: p.header.cols };
    let reservoirs: BTreeSet<Loc> = p.header.reservoirs.iter().map(|r| r.loc).collect();
    for (li, line) in p.main.iter().enumerate() {
        for (ii, ins) in line.instrs.iter().enumerate() {
            let Instruction::Dispense(loc) = ins else { continue };
            if let Some(n) = dims.neighbors4(*loc).into_iter().find(|n| !reservoirs.contains(n)) {
                let mut q = p.clone();
                q.main[li].instrs[ii] = Instruction::Dispense(n);
                let summary = format!("t={}: {} replaced by d({},{})", line.t, ins.compact(), n.row, n.col);
                return Ok(Mutation { program: q, pins: None, summary });
            }
        }
    }
    Err(inapplicable(kind, "no dispense with a free neighbor"))
}

/// The last mix: one tick after it starts, its first endpoint steps away
/// along the mixer axis.
fn inject_e4(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E4;
    let dims = crate::chip::Dims { rows: p.header.rows, cols: p.header.cols };
    for line in p.main.iter().rev() {
        for ins in line.instrs.iter().rev() {
            let Instruction::MixStart { a, b, .. } = ins else { continue };
            let (dr, dc) = ((a.row as i64 - b.row as i64).signum(), (a.col as i64 - b.col as i64).signum());
            let tries = [(*a, *b, dr, dc), (*b, *a, -dr, -dc)];
            for (end, _, dr, dc) in tries {
                let Some(dst) = end.offset(dr, dc).filter(|&d| dims.in_bounds(d)) else { continue };
                let t = line.t + 1;
                let mv = Instruction::Move { src: end, dst };
                let mut q = p.clone();
                match q.main.iter().position(|l| l.t >= t) {
                    Some(i) if q.main[i].t == t && !q.main[i].instrs.contains(&Instruction::End) => {
                        q.main[i].instrs.push(mv.clone())
                    }
                    Some(i) if q.main[i].t == t => return Err(inapplicable(kind, "mix starts on the last tick")),
                    Some(i) => q.main.insert(i, TimedLine::new(t, vec![mv.clone()])),
                    None => q.main.push(TimedLine::new(t, vec![mv.clone()])),
                }
                let summary = format!("t={t}: added {}", mv.compact());
                return Ok(Mutation { program: q, pins: None, summary });
            }
        }
    }
    Err(inapplicable(kind, "no mix with room to step out"))
}

/// The first line made only of mixes hands its first mix to the line just
/// before it.
fn inject_e5(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E5;
    for li in 1..p.main.len() {
        let line = &p.main[li];
        let only_mixes = !line.instrs.is_empty() && line.instrs.iter().all(|i| matches!(i, Instruction::MixStart { .. }));
        if !only_mixes || p.main[li - 1].t + 1 != line.t {
            continue;
        }
        let mut q = p.clone();
        let mix = q.main[li].instrs.remove(0);
        let summary = format!("{} moved from t={} to t={}", mix.compact(), line.t, line.t - 1);
        q.main[li - 1].instrs.push(mix);
        if q.main[li].instrs.is_empty() {
            q.main.remove(li);
        }
        return Ok(Mutation { program: q, pins: None, summary });
    }
    Err(inapplicable(kind, "no mix-only line directly after another line"))
}

/// First mix with a mixing time above 1 gets half of it.
fn inject_e6(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E6;
    let mut q = p.clone();
    for line in &mut q.main {
        for ins in &mut line.instrs {
            if let Instruction::MixStart { t_mix, .. } = ins {
                if *t_mix > 1 {
                    let old = *t_mix;
                    *t_mix = (old / 2).max(1);
                    let summary = format!("t={}: mixing time {old} cut to {}", line.t, *t_mix);
                    return Ok(Mutation { program: q, pins: None, summary });
                }
            }
        }
    }
    Err(inapplicable(kind, "no mix longer than one tick"))
}

/// First pair of reagent reservoirs whose interchange changes the realized
/// graph.
fn inject_e7(p: &Program) -> Result<Mutation, InjectError> {
    let kind = InjectKind::E7;
    let trace = clean_trace(p, kind)?;
    let base = reconstruct(&trace).map_err(|e| inapplicable(kind, &e.to_string()))?;
    let reagents: Vec<usize> = p
        .header
        .reservoirs
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r.kind, ReservoirKind::Reagent(_)))
        .map(|(i, _)| i)
        .collect();
    for (x, &i) in reagents.iter().enumerate() {
        for &j in &reagents[x + 1..] {
            if p.header.reservoirs[i].kind == p.header.reservoirs[j].kind {
                continue;
            }
            let mut q = p.clone();
            let (ki, kj) = (q.header.reservoirs[i].kind.clone(), q.header.reservoirs[j].kind.clone());
            q.header.reservoirs[i].kind = kj;
            q.header.reservoirs[j].kind = ki;
            let (t2, r2) = verify_program(&q, &VerifyOptions::default());
            if !r2.passed() {
                continue;
            }
            let Ok(g) = reconstruct(&t2) else { continue };
            let opts = ConformOptions { accuracy: p.header.accuracy, ..Default::default() };
            if !conformance(&base, &g, &opts).passed() {
                let (a, b) = (p.header.reservoirs[i].loc, p.header.reservoirs[j].loc);
                let summary = format!("reagents at {a} and {b} interchanged");
                return Ok(Mutation { program: q, pins: None, summary });
            }
        }
    }
    Err(inapplicable(kind, "no reagent interchange changes the result"))
}

/// First move next to another free droplet: an electrode bordering the
/// other droplet's next cell takes the mover's destination pin.
fn inject_pins(p: &Program, base: Option<&PinMap>) -> Result<Mutation, InjectError> {
    let kind = InjectKind::Pins;
    let trace = clean_trace(p, kind)?;
    let mut map = base.cloned().unwrap_or_else(|| PinMap::dedicated(p.header.rows, p.header.cols));
    for line in &p.main {
        let before = trace.state_before(line.t);
        let after = trace.state_at(line.t);
        for (src, dst) in line.instrs.iter().filter_map(is_move) {
            let others = after
                .droplets()
                .map(|d| d.loc)
                .filter(|&l| l != dst && after.mixer_holding(l).is_none());
            for other in others {
                let cell = before
                    .dims()
                    .neighbors4(other)
                    .into_iter()
                    .find(|&c| c != dst && c != src && c.chebyshev(dst) > 1);
                if let (Some(cell), Some(pin)) = (cell, map.pin(dst)) {
                    map.set(cell, pin).expect("cell is on the chip");
                    let summary = format!("t={}: electrode {cell} now shares pin {pin} with {dst}", line.t);
                    return Ok(Mutation { program: p.clone(), pins: Some(map), summary });
                }
            }
        }
    }
    Err(inapplicable(kind, "no move with another free droplet on the chip"))
}

/// Replaces the main line at tick `t` with `instrs` (inserting it if absent).
/// The result must still parse.
pub fn substitute(p: &Program, t: u32, instrs: &str) -> Result<Mutation, InjectError> {
    let bad = |reason: String| InjectError::MutationInapplicable { kind: InjectKind::Substitute, reason };
    let mut head = p.clone();
    head.main.clear();
    head.recoveries.clear();
    let text = format!("{}{t} {instrs}\n", serialize_program(&head));
    let parsed = parse_unvalidated(&text).map_err(|e| bad(e.to_string()))?;
    let line = parsed.main.into_iter().next().ok_or_else(|| bad("no instructions given".into()))?;
    let mut q = p.clone();
    match q.main.iter().position(|l| l.t >= t) {
        Some(i) if q.main[i].t == t => q.main[i].instrs = line.instrs,
        Some(i) => q.main.insert(i, line),
        None => q.main.push(line),
    }
    let q = parse_program(&serialize_program(&q)).map_err(|e| bad(e.to_string()))?;
    Ok(Mutation { program: q, pins: None, summary: format!("t={t}: line set to `{instrs}`") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    #[test]
    fn empty_assay_is_inapplicable() {
        let p = parse_program("dim(3,3)\naccuracy 2\nR(1,1,A)\n1 end\n").unwrap();
        for k in [InjectKind::E1, InjectKind::E3, InjectKind::E6, InjectKind::Pins] {
            assert!(matches!(inject(&p, k, None), Err(InjectError::MutationInapplicable { .. })));
        }
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("E3".parse::<InjectKind>().unwrap(), InjectKind::E3);
        assert!("e9".parse::<InjectKind>().is_err());
        assert_eq!(InjectKind::Pins.to_string(), "pins");
    }

    #[test]
    fn substitute_replaces_or_inserts() {
        let p = parse_program("dim(3,3)\naccuracy 2\nR(1,1,A)\n1 d(1,1)\n3 end\n").unwrap();
        let m = substitute(&p, 2, "m(1,1,2,1)").unwrap();
        assert_eq!(m.program.main.len(), 3);
        assert_eq!(m.program.main[1].instrs[0].compact(), "m(1,1,2,1)");
        let m = substitute(&p, 1, "d(2,2)").unwrap();
        assert_eq!(m.program.main[0].instrs, vec![Instruction::Dispense(Loc::new(2, 2))]);
        assert!(substitute(&p, 2, "m(1,1").is_err());
    }
}
