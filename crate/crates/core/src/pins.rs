//! Shared-pin rules for pin-constrained chips.
//!
//! One control pin may drive several electrodes. A droplet then feels every
//! electrode on its pin, so the rules below forbid any pin overlap that would
//! pull a droplet apart (Case 1), drag it toward another droplet's pin
//! (Case 2), or hold it back while it moves (Case 3).

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write;

use thiserror::Error;

use crate::chip::{ChipState, Dims};
use crate::diag::{classify, Code, Failure, Report, Violation};
use crate::fluidics::{instr_text, run_lines, Motion, StepOutcome, TickHook, Trace, VerifyOptions};
use crate::isa::{Loc, Program, TimedLine};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PinMapError {
    #[error("line {line}: `{token}` is not a positive pin number")]
    BadToken { line: usize, token: String },
    #[error("row {line} has {found} columns, expected {expected}")]
    RaggedRow { line: usize, found: usize, expected: usize },
    #[error("pin map is empty")]
    Empty,
    #[error("pin map is {found_rows}x{found_cols}, chip is {rows}x{cols}")]
    DimensionMismatch { rows: u32, cols: u32, found_rows: u32, found_cols: u32 },
    #[error("{0} is outside the pin map")]
    OutOfBounds(Loc),
}

/// Electrode-to-pin assignment, a total function over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinMap {
    dims: Dims,
    pins: Vec<u32>,
}

impl PinMap {
    /// Row-major pins; every pin must be positive.
    pub fn new(rows: u32, cols: u32, pins: Vec<u32>) -> Option<Self> {
        (rows > 0 && cols > 0 && pins.len() == (rows * cols) as usize && pins.iter().all(|&p| p > 0))
            .then_some(PinMap { dims: Dims { rows, cols }, pins })
    }

    /// One distinct pin per electrode, numbered row-major from 1.
    pub fn dedicated(rows: u32, cols: u32) -> Self {
        PinMap { dims: Dims { rows, cols }, pins: (1..=rows * cols).collect() }
    }

    /// Parses a whitespace-separated integer grid, one chip row per line.
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PinMapError> {
        let mut rows: Vec<Vec<u32>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("");
            let row: Vec<u32> = content
                .split_whitespace()
                .map(|tok| match tok.parse::<u32>() {
                    Ok(p) if p > 0 => Ok(p),
                    _ => Err(PinMapError::BadToken { line: i + 1, token: tok.to_string() }),
                })
                .collect::<Result<_, _>>()?;
            if row.is_empty() {
                continue;
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(PinMapError::RaggedRow { line: i + 1, found: row.len(), expected: first.len() });
                }
            }
            rows.push(row);
        }
        let (r, c) = (rows.len() as u32, rows.first().map_or(0, Vec::len) as u32);
        if r == 0 {
            return Err(PinMapError::Empty);
        }
        Ok(PinMap { dims: Dims { rows: r, cols: c }, pins: rows.into_iter().flatten().collect() })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn pin(&self, loc: Loc) -> Option<u32> {
        self.dims
            .in_bounds(loc)
            .then(|| self.pins[((loc.row - 1) * self.dims.cols + (loc.col - 1)) as usize])
    }

    pub fn set(&mut self, loc: Loc, pin: u32) -> Result<(), PinMapError> {
        if !self.dims.in_bounds(loc) {
            return Err(PinMapError::OutOfBounds(loc));
        }
        let i = ((loc.row - 1) * self.dims.cols + (loc.col - 1)) as usize;
        self.pins[i] = pin;
        Ok(())
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = HashSet::new();
        self.pins.iter().all(|p| seen.insert(*p))
    }

    /// Canonical `.pins` text, right-aligned columns.
    pub fn to_text(&self) -> String {
        let w = self.pins.iter().map(|p| p.to_string().len()).max().unwrap_or(1);
        let mut out = String::new();
        for row in self.pins.chunks(self.dims.cols as usize) {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    fn n4(&self, loc: Loc) -> Vec<Loc> {
        self.dims.neighbors4(loc)
    }
}

/// `Pin(L)`: the set image of the pin map over `cells`.
pub fn pins_of(map: &PinMap, cells: &[Loc]) -> Result<BTreeSet<u32>, PinMapError> {
    cells.iter().map(|&l| map.pin(l).ok_or(PinMapError::OutOfBounds(l))).collect()
}

fn pins_in(map: &PinMap, cells: &[Loc]) -> BTreeSet<u32> {
    cells.iter().filter_map(|&l| map.pin(l)).collect()
}

/// Which rule a finding comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Case1,
    /// `Pin(D1^t) ∩ Pin(N4(D2^t))`
    Case2a,
    /// `Pin(N4(D1^t)) ∩ Pin(D2^t)`
    Case2b,
    /// `Pin(D1^{t+1}) ∩ Pin(N4(D2^{t+1}))`
    Case2c,
    /// `Pin(N4(D1^{t+1})) ∩ Pin(D2^{t+1})`
    Case2d,
    /// `Pin(D1^{t+1}) ∩ Pin(N4(D2^t) \ {D2^{t+1}})`
    Case3a,
    /// `Pin(N4(D1^t) \ {D1^{t+1}}) ∩ Pin(D2^{t+1})`
    Case3b,
    /// Dispensed cell against an existing droplet's neighborhood or its own.
    Dispense,
}

impl Rule {
    pub fn code(self) -> Code {
        match self {
            Rule::Case1 => Code::PinCase1,
            Rule::Case2a | Rule::Case2b | Rule::Case2c | Rule::Case2d => Code::PinCase2,
            Rule::Case3a | Rule::Case3b => Code::PinCase3,
            Rule::Dispense => Code::PinDispense,
        }
    }
}

/// One non-empty intersection: the shared pins and the cells carrying them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinFinding {
    pub rule: Rule,
    pub pins: BTreeSet<u32>,
    pub cells: Vec<Loc>,
    pub consequence: String,
}

fn finding(map: &PinMap, rule: Rule, left: &[Loc], right: &[Loc], consequence: String) -> Option<PinFinding> {
    let shared: BTreeSet<u32> = pins_in(map, left).intersection(&pins_in(map, right)).copied().collect();
    if shared.is_empty() {
        return None;
    }
    let mut cells: Vec<Loc> = left
        .iter()
        .chain(right)
        .copied()
        .filter(|&l| map.pin(l).is_some_and(|p| shared.contains(&p)))
        .collect();
    cells.sort();
    cells.dedup();
    Some(PinFinding { rule, pins: shared, cells, consequence })
}

pub const STRETCH: &str = "Droplet stretch";
pub const SPLIT: &str = "Unintentional split";

/// Case 1: the four neighbors of `loc` carry pairwise distinct pins.
pub fn check_case1(map: &PinMap, loc: Loc) -> Option<PinFinding> {
    let n4 = map.n4(loc);
    let mut shared = BTreeSet::new();
    let mut cells = Vec::new();
    for (i, &a) in n4.iter().enumerate() {
        for &b in &n4[i + 1..] {
            if map.pin(a) == map.pin(b) {
                shared.extend(map.pin(a));
                cells.extend([a, b]);
            }
        }
    }
    cells.sort();
    cells.dedup();
    (!shared.is_empty()).then(|| PinFinding { rule: Rule::Case1, pins: shared, cells, consequence: SPLIT.into() })
}

fn without(cells: Vec<Loc>, drop: Loc) -> Vec<Loc> {
    cells.into_iter().filter(|&l| l != drop).collect()
}

/// Case 3 wording: a shared pin directly behind a moving droplet holds it
/// back; anything else stretches it.
fn case3_consequence(map: &PinMap, from: Loc, to: Loc, shared_left: &[Loc], pins: &BTreeSet<u32>) -> String {
    if from == to {
        return STRETCH.into();
    }
    let behind = from.offset(from.row as i64 - to.row as i64, from.col as i64 - to.col as i64);
    let stuck = behind.is_some_and(|b| {
        shared_left.contains(&b) && map.pin(b).is_some_and(|p| pins.contains(&p))
    });
    if stuck {
        format!("Droplet stuck on {from}")
    } else {
        STRETCH.into()
    }
}

/// Cases 2 and 3 for droplet `D1` moving `d1_t -> d1_t1` and `D2` moving
/// `d2_t -> d2_t1`. A static droplet has equal ends, which yields the
/// substituted variants. Returns every non-empty intersection in rule order.
pub fn check_pair(map: &PinMap, d1_t: Loc, d1_t1: Loc, d2_t: Loc, d2_t1: Loc) -> Vec<PinFinding> {
    let mut out = Vec::new();
    let mut push = |f: Option<PinFinding>| out.extend(f);
    push(finding(map, Rule::Case2a, &[d1_t], &map.n4(d2_t), STRETCH.into()));
    push(finding(map, Rule::Case2b, &map.n4(d1_t), &[d2_t], STRETCH.into()));
    push(finding(map, Rule::Case2c, &[d1_t1], &map.n4(d2_t1), STRETCH.into()));
    push(finding(map, Rule::Case2d, &map.n4(d1_t1), &[d2_t1], STRETCH.into()));

    let ring2 = without(map.n4(d2_t), d2_t1);
    if let Some(mut f) = finding(map, Rule::Case3a, &[d1_t1], &ring2, String::new()) {
        f.consequence = case3_consequence(map, d2_t, d2_t1, &ring2, &f.pins);
        push(Some(f));
    }
    let ring1 = without(map.n4(d1_t), d1_t1);
    if let Some(mut f) = finding(map, Rule::Case3b, &ring1, &[d2_t1], String::new()) {
        f.consequence = case3_consequence(map, d1_t, d1_t1, &ring1, &f.pins);
        push(Some(f));
    }
    out
}

/// Dispensing onto `loc` next to the droplets at `existing`.
pub fn check_dispense_pins(map: &PinMap, existing: &[Loc], loc: Loc) -> Vec<PinFinding> {
    let mut out: Vec<PinFinding> = existing
        .iter()
        .filter_map(|&d| finding(map, Rule::Dispense, &[loc], &map.n4(d), STRETCH.into()))
        .collect();
    out.extend(finding(map, Rule::Dispense, &[loc], &map.n4(loc), STRETCH.into()));
    out
}

/// Picks the reported finding: a stuck droplet outranks a stretch, and
/// otherwise the first rule in order wins.
pub fn headline(findings: &[PinFinding]) -> Option<&PinFinding> {
    findings.iter().find(|f| f.consequence.starts_with("Droplet stuck")).or(findings.first())
}

fn to_violation(f: &PinFinding, line: &TimedLine, indices: &[usize]) -> Violation {
    classify(
        Failure::Pin {
            code: f.rule.code(),
            cells: f.cells.clone(),
            pins: f.pins.iter().copied().collect(),
            consequence: f.consequence.clone(),
        },
        Some(line.t),
        &instr_text(line, indices),
        line.line,
    )
}

/// Pin phase run after each fluidically clean tick.
#[derive(Debug)]
pub struct PinHook<'a> {
    pub map: &'a PinMap,
    /// Pair checks performed so far.
    pub pair_checks: usize,
    reported: HashSet<(Loc, Loc, Rule)>,
}

impl<'a> PinHook<'a> {
    pub fn new(map: &'a PinMap) -> Self {
        PinHook { map, pair_checks: 0, reported: HashSet::new() }
    }

    /// Violations of one tick given the chip at its start and the accepted
    /// motions.
    pub fn check_tick(&mut self, line: &TimedLine, start: &ChipState, motions: &[Motion]) -> Vec<Violation> {
        let map = self.map;
        let mut out = Vec::new();
        let moved = |loc: Loc| motions.iter().find(|m| m.from == Some(loc) && m.to.is_some() && m.to != m.from);

        let removed = |loc: Loc| motions.iter().any(|m| m.from == Some(loc) && m.to.is_none());

        // Free droplets at t with their position at t+1; droplets leaving the chip hold no cell.
        let free: Vec<(Loc, Loc, Option<usize>)> = start
            .droplets()
            .filter(|d| start.mixer_holding(d.loc).is_none() && !removed(d.loc))
            .map(|d| match moved(d.loc) {
                Some(m) => (d.loc, m.to.expect("moves have a target"), Some(m.index)),
                None => (d.loc, d.loc, None),
            })
            .collect();

        let existing: Vec<Loc> = start.droplets().map(|d| d.loc).collect();
        for m in motions.iter().filter(|m| m.from.is_none()) {
            let loc = m.to.expect("dispense has a target");
            let findings = check_dispense_pins(map, &existing, loc);
            if let Some(f) = headline(&findings) {
                out.push(to_violation(f, line, &[m.index]));
            }
            if let Some(f) = check_case1(map, loc) {
                out.push(to_violation(&f, line, &[m.index]));
            }
        }

        for (i, &(a_t, a_t1, ia)) in free.iter().enumerate() {
            for &(b_t, b_t1, ib) in &free[i + 1..] {
                self.pair_checks += 1;
                // Touching droplets already merged; that is a fluidic fault.
                if a_t.chebyshev(b_t) <= 1 {
                    continue;
                }
                let findings = check_pair(map, a_t, a_t1, b_t, b_t1);
                let Some(f) = headline(&findings) else { continue };
                if ia.is_none() && ib.is_none() && !self.reported.insert((a_t1, b_t1, f.rule)) {
                    continue;
                }
                self.reported.insert((a_t1, b_t1, f.rule));
                let indices: Vec<usize> = [ia, ib].into_iter().flatten().collect();
                out.push(to_violation(f, line, &indices));
            }
        }

        for &(from, to, idx) in &free {
            if from != to {
                if let Some(f) = check_case1(map, to) {
                    out.push(to_violation(&f, line, &[idx.expect("moved")]));
                }
            }
        }
        out
    }
}

impl TickHook for PinHook<'_> {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation> {
        if !outcome.violations.is_empty() {
            return Vec::new();
        }
        self.check_tick(line, &outcome.start, &outcome.motions)
    }
}

/// Fluidic verification with the pin phase added to every tick.
pub fn verify_program_pins(
    p: &Program,
    map: &PinMap,
    opts: &VerifyOptions,
) -> Result<(Trace, Report), PinMapError> {
    verify_lines_pins(p, &p.main, map, opts)
}

pub fn verify_lines_pins(
    p: &Program,
    lines: &[TimedLine],
    map: &PinMap,
    opts: &VerifyOptions,
) -> Result<(Trace, Report), PinMapError> {
    let d = map.dims();
    if d.rows != p.header.rows || d.cols != p.header.cols {
        return Err(PinMapError::DimensionMismatch {
            rows: p.header.rows,
            cols: p.header.cols,
            found_rows: d.rows,
            found_cols: d.cols,
        });
    }
    let mut hook = PinHook::new(map);
    Ok(run_lines(p, lines, opts, &mut hook))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(r: u32, c: u32) -> Loc {
        Loc::new(r, c)
    }

    fn set(pins: &[u32]) -> BTreeSet<u32> {
        pins.iter().copied().collect()
    }

    #[test]
    fn parse_and_print() {
        let m = PinMap::parse("1 2 3\n4 5 6 # row two\n").unwrap();
        assert_eq!(m.pin(l(2, 3)), Some(6));
        assert_eq!(PinMap::parse(&m.to_text()).unwrap(), m);
        assert!(matches!(PinMap::parse("1 2\n3\n"), Err(PinMapError::RaggedRow { .. })));
        assert!(matches!(PinMap::parse("1 x\n"), Err(PinMapError::BadToken { .. })));
        assert!(matches!(PinMap::parse("0 1\n"), Err(PinMapError::BadToken { .. })));
        assert_eq!(PinMap::parse("\n#\n"), Err(PinMapError::Empty));
    }

    #[test]
    fn pins_of_empty_and_out_of_bounds() {
        let m = PinMap::dedicated(3, 3);
        assert_eq!(pins_of(&m, &[]).unwrap(), BTreeSet::new());
        assert_eq!(pins_of(&m, &[l(4, 1)]), Err(PinMapError::OutOfBounds(l(4, 1))));
    }

    #[test]
    fn case1_distinct_neighbors_ok() {
        let m = PinMap::dedicated(5, 5);
        assert_eq!(check_case1(&m, l(3, 3)), None);
    }

    #[test]
    fn pair_symmetry_on_small_map() {
        let m = PinMap::new(3, 3, vec![1, 2, 1, 3, 4, 3, 2, 1, 2]).unwrap();
        let a = check_pair(&m, l(1, 1), l(1, 2), l(3, 3), l(3, 3));
        let b = check_pair(&m, l(3, 3), l(3, 3), l(1, 1), l(1, 2));
        let rules = |fs: &[PinFinding]| -> BTreeSet<(u8, BTreeSet<u32>)> {
            fs.iter()
                .map(|f| {
                    let k = match f.rule {
                        Rule::Case2a | Rule::Case2b => 0,
                        Rule::Case2c | Rule::Case2d => 1,
                        _ => 2,
                    };
                    (k, f.pins.clone())
                })
                .collect()
        };
        assert_eq!(rules(&a), rules(&b));
        assert_eq!(set(&[1]), a[0].pins);
    }

    #[test]
    fn dedicated_map_is_silent() {
        let m = PinMap::dedicated(8, 8);
        assert!(m.is_injective());
        assert!(check_pair(&m, l(2, 2), l(2, 3), l(6, 6), l(6, 5)).is_empty());
        assert!(check_dispense_pins(&m, &[l(5, 5)], l(1, 1)).is_empty());
    }

    #[test]
    fn departing_droplet_holds_no_cell() {
        let text = "dim(4,4) accuracy 4\nR(1,1,A) W(4,1)\n1 d(1,1)\n2 m(1,1,2,1)\n3 m(2,1,3,1)\n4 m(3,1,4,1)\n5 d(1,1)\n6 m(1,1,1,2)\n7 m(1,2,1,3)\n8 m(1,3,2,3)\n9 m(2,3,2,4)\n10 m(2,4,3,4)\n11 m(3,4,4,4)\n12 m(4,4,4,3)\n13 waste(4,1) m(4,3,4,2)\n14 end\n";
        let p = crate::isa::parse_program(text).unwrap();
        let map = PinMap::dedicated(4, 4);
        let (_, r) = verify_program_pins(&p, &map, &VerifyOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.codes());
    }
}
