//! Fluidic constraint checking for fully reconfigurable chips.
//!
//! Every instruction of a line is checked against the chip as it stood at
//! the start of the tick, plus the cells already claimed on that line. The
//! accepted effects are then committed together and the resulting state is
//! checked for pairwise droplet separation.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::chip::{ChipState, DropletId, MixCompleted};
use crate::diag::{classify, Failure, Report, Violation};
use crate::graph::cf::CfVector;
use crate::isa::{DetectorDecl, Instruction, Loc, MixerType, Program, ReservoirKind, TimedLine};

/// `true` iff no in-bounds 8-neighbor of `loc` is occupied.
pub fn static_fc(state: &ChipState, loc: Loc) -> bool {
    state.dims().neighbors8(loc).into_iter().all(|n| !state.grid.get(n))
}

/// Occupied 8-neighbors of `loc`, row-major.
fn crowding(state: &ChipState, loc: Loc) -> Vec<Loc> {
    state.dims().neighbors8(loc).into_iter().filter(|&n| state.grid.get(n)).collect()
}

/// Cells covered by active mixers other than their endpoints.
fn mixer_interior(state: &ChipState, loc: Loc) -> bool {
    state.mixers.iter().any(|m| !m.holds(loc) && m.span().contains(&loc))
}

fn in_mixer_span(state: &ChipState, loc: Loc) -> bool {
    state.mixers.iter().any(|m| m.span().contains(&loc))
}

pub fn check_dispense(state: &ChipState, loc: Loc) -> Result<(), Failure> {
    if state.reagent_at(loc).is_none() {
        return Err(Failure::InvalidReservoir { loc, wanted: "reagent" });
    }
    if state.is_pending(loc) {
        return Err(Failure::DoubleClaim { loc });
    }
    let mut cells: Vec<Loc> = Vec::new();
    if state.grid.get(loc) || in_mixer_span(state, loc) {
        cells.push(loc);
    }
    cells.extend(crowding(state, loc));
    cells.extend(state.dims().neighbors8(loc).into_iter().filter(|&n| mixer_interior(state, n)));
    if cells.is_empty() {
        Ok(())
    } else {
        cells.sort();
        cells.dedup();
        Err(Failure::StaticFc { cells })
    }
}

/// The three cells beyond `dst` in the direction of travel; cells outside the
/// chip are dropped since walls hold no droplets.
pub fn e_cells(state: &ChipState, src: Loc, dst: Loc) -> Vec<Loc> {
    let dr = dst.row as i64 - src.row as i64;
    let dc = dst.col as i64 - src.col as i64;
    let ahead = [(2 * dr - dc.abs(), 2 * dc - dr.abs()), (2 * dr, 2 * dc), (2 * dr + dc.abs(), 2 * dc + dr.abs())];
    ahead
        .iter()
        .filter_map(|&(r, c)| src.offset(r, c))
        .filter(|&l| state.dims().in_bounds(l))
        .collect()
}

/// Checks `m(src -> dst)`. `moving` lists the sources of every move issued on
/// the same line; a blocked cell holding one of them is a dynamic violation,
/// any other blocker a static one.
pub fn check_move(state: &ChipState, src: Loc, dst: Loc, moving: &[Loc]) -> Result<(), Failure> {
    if !state.grid.get(src) || state.is_pending(src) {
        return Err(Failure::NoDropletAtSource { loc: src });
    }
    if state.mixer_holding(src).is_some() {
        return Err(Failure::ActiveMixer { loc: src });
    }
    if state.detection_at(src).is_some() {
        return Err(Failure::UnderDetection { loc: src });
    }
    if in_mixer_span(state, dst) {
        return Err(Failure::ActiveMixer { loc: dst });
    }
    let blocked: Vec<Loc> = e_cells(state, src, dst)
        .into_iter()
        .filter(|&l| state.grid.get(l) || mixer_interior(state, l))
        .collect();
    let dynamic: Vec<Loc> = blocked.iter().copied().filter(|l| moving.contains(l) && *l != src).collect();
    if !dynamic.is_empty() {
        Err(Failure::DynamicFc { cells: dynamic })
    } else if !blocked.is_empty() {
        let mut cells = vec![dst];
        cells.extend(blocked);
        Err(Failure::StaticFc { cells })
    } else {
        Ok(())
    }
}

pub fn check_mix_start(
    state: &ChipState,
    a: Loc,
    b: Loc,
    _t_mix: u32,
    mtype: MixerType,
) -> Result<(), Failure> {
    let missing: Vec<Loc> =
        [a, b].into_iter().filter(|&l| !state.grid.get(l) || state.is_pending(l)).collect();
    if !missing.is_empty() {
        return Err(Failure::WrongDropletCount { missing });
    }
    for l in [a, b] {
        if state.mixer_holding(l).is_some() {
            return Err(Failure::ActiveMixer { loc: l });
        }
    }
    if !mtype.fits(a, b) {
        return Err(Failure::Geometry { a, b, mtype });
    }
    let mut cells: Vec<Loc> = Vec::new();
    for l in [a, b] {
        cells.extend(crowding(state, l));
        cells.extend(state.dims().neighbors8(l).into_iter().filter(|&n| in_mixer_span(state, n)));
    }
    if cells.is_empty() {
        Ok(())
    } else {
        cells.sort();
        cells.dedup();
        Err(Failure::StaticFc { cells })
    }
}

fn check_sink(state: &ChipState, loc: Loc, kind: ReservoirKind, wanted: &'static str) -> Result<(), Failure> {
    if state.reservoirs.get(&loc) != Some(&kind) {
        return Err(Failure::InvalidReservoir { loc, wanted });
    }
    if state.is_pending(loc) {
        return Err(Failure::DoubleClaim { loc });
    }
    if !state.grid.get(loc) {
        return Err(Failure::NoDropletAtSource { loc });
    }
    if state.mixer_holding(loc).is_some() {
        return Err(Failure::ActiveMixer { loc });
    }
    if state.detection_at(loc).is_some() {
        return Err(Failure::UnderDetection { loc });
    }
    Ok(())
}

pub fn check_waste(state: &ChipState, loc: Loc) -> Result<(), Failure> {
    check_sink(state, loc, ReservoirKind::Waste, "waste")
}

pub fn check_output(state: &ChipState, loc: Loc) -> Result<(), Failure> {
    check_sink(state, loc, ReservoirKind::Output, "output")
}

pub fn check_detect(state: &ChipState, decl: &DetectorDecl) -> Result<(), Failure> {
    if state.detections.iter().any(|d| d.detector == decl.id) {
        return Err(Failure::DetectorBusy { detector: decl.id.clone(), loc: decl.loc });
    }
    if !state.grid.get(decl.loc) {
        return Err(Failure::NoDropletAtDetector { detector: decl.id.clone(), loc: decl.loc });
    }
    Ok(())
}

/// Occupied cells guarded by an active mixer: its strip and the ring around
/// it, minus the two endpoints it holds. One entry per mixer with intruders.
pub fn active_mixer_guard(state: &ChipState) -> Vec<Failure> {
    let dims = state.dims();
    let mut out = Vec::new();
    for m in &state.mixers {
        let mut region: BTreeSet<Loc> = BTreeSet::new();
        for l in m.span() {
            region.insert(l);
            region.extend(dims.neighbors8(l));
        }
        let cells: Vec<Loc> =
            region.into_iter().filter(|&l| !m.holds(l) && state.grid.get(l)).collect();
        if !cells.is_empty() {
            out.push(Failure::StaticFc { cells });
        }
    }
    out
}

/// Pairs of droplets closer than one free cell, excluding the two endpoints
/// of one mixer.
pub fn separation_conflicts(state: &ChipState) -> Vec<(Loc, Loc)> {
    let locs: Vec<Loc> = state.droplets().map(|d| d.loc).collect();
    let mut out = Vec::new();
    for (i, &p) in locs.iter().enumerate() {
        for &q in &locs[i + 1..] {
            if p.chebyshev(q) <= 1 && !state.mixers.iter().any(|m| m.holds(p) && m.holds(q)) {
                out.push((p, q));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sink {
    Waste,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Dispensed { t: u32, id: DropletId, reagent: usize, loc: Loc },
    MixStarted { t: u32, a: Loc, b: Loc, ids: (DropletId, DropletId) },
    MixCompleted(MixCompleted),
    Removed { t: u32, id: DropletId, cf: CfVector, loc: Loc, sink: Sink },
    DetectStarted { t: u32, detector: String, loc: Loc },
}

/// An accepted instruction and the droplet displacement it causes.
/// `from == None` is a dispense, `to == None` a removal, and equal ends a
/// droplet held in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Motion {
    pub index: usize,
    pub from: Option<Loc>,
    pub to: Option<Loc>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// State at the start of the tick, after mixer expiry.
    pub start: ChipState,
    /// State after all accepted instructions are committed.
    pub next: ChipState,
    pub violations: Vec<Violation>,
    pub events: Vec<Event>,
    pub motions: Vec<Motion>,
}

/// Compact text of the instructions at `indices`, in line order.
pub fn instr_text(line: &TimedLine, indices: &[usize]) -> String {
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    idx.iter().map(|&i| line.instrs[i].compact()).collect::<Vec<_>>().join(" ")
}

/// Executes one line. Rejected instructions are reported and skipped.
pub fn step(state: &ChipState, line: &TimedLine, detectors: &[DetectorDecl]) -> StepOutcome {
    let mut start = state.clone();
    start.begin_tick(line.t);
    let mut events: Vec<Event> = start.expire_mixers(line.t).into_iter().map(Event::MixCompleted).collect();
    let mut view = start.clone();
    let moving: Vec<Loc> = line
        .instrs
        .iter()
        .filter_map(|i| match i {
            Instruction::Move { src, .. } => Some(*src),
            _ => None,
        })
        .collect();
    let t = line.t;
    let mut violations = Vec::new();
    let mut motions = Vec::new();
    let mut report = |failure: Failure, indices: &[usize]| {
        violations.push(classify(failure, Some(t), &instr_text(line, indices), line.line));
    };

    for (idx, instr) in line.instrs.iter().enumerate() {
        match instr {
            Instruction::Dispense(loc) => match check_dispense(&view, *loc) {
                Ok(()) => {
                    let k = view.reagent_at(*loc).expect("checked reagent reservoir");
                    let d = view.reagent_droplet(k, *loc);
                    view.claim(*loc, d).expect("checked unclaimed");
                    motions.push(Motion { index: idx, from: None, to: Some(*loc) });
                }
                Err(f) => report(f, &[idx]),
            },
            Instruction::Move { src, dst } => {
                if src.manhattan(*dst) != 1 {
                    report(Failure::Geometry { a: *src, b: *dst, mtype: MixerType::H14 }, &[idx]);
                    continue;
                }
                match check_move(&view, *src, *dst, &moving) {
                    Ok(()) => motions.push(Motion { index: idx, from: Some(*src), to: Some(*dst) }),
                    Err(Failure::DynamicFc { cells }) => {
                        let mut involved = vec![idx];
                        for (j, other) in line.instrs.iter().enumerate() {
                            if let Instruction::Move { src: s, .. } = other {
                                if cells.contains(s) {
                                    involved.push(j);
                                }
                            }
                        }
                        report(Failure::DynamicFc { cells }, &involved);
                    }
                    Err(f) => report(f, &[idx]),
                }
            }
            Instruction::MixStart { a, b, t_mix, mtype } => {
                match check_mix_start(&view, *a, *b, *t_mix, *mtype) {
                    Ok(()) => {
                        view.start_mixer(*a, *b, *t_mix, *mtype);
                        motions.push(Motion { index: idx, from: Some(*a), to: Some(*a) });
                        motions.push(Motion { index: idx, from: Some(*b), to: Some(*b) });
                    }
                    Err(f) => report(f, &[idx]),
                }
            }
            Instruction::Waste(loc) | Instruction::Output(loc) => {
                let checked = if matches!(instr, Instruction::Waste(_)) {
                    check_waste(&view, *loc)
                } else {
                    check_output(&view, *loc)
                };
                match checked {
                    Ok(()) => {
                        view.release(*loc).expect("checked occupied");
                        motions.push(Motion { index: idx, from: Some(*loc), to: None });
                    }
                    Err(f) => report(f, &[idx]),
                }
            }
            Instruction::DetectStart(id) => {
                let Some(decl) = detectors.iter().find(|d| &d.id == id) else {
                    continue;
                };
                match check_detect(&view, decl) {
                    Ok(()) => {
                        view.start_detection(&decl.id, decl.loc, decl.duration);
                        motions.push(Motion { index: idx, from: Some(decl.loc), to: Some(decl.loc) });
                    }
                    Err(f) => report(f, &[idx]),
                }
            }
            Instruction::CondCall { .. } | Instruction::End => {}
        }
    }

    // Commit: removals first, then arrivals, so moves never see each other.
    let mut next = start.clone();
    let mut carried = Vec::new();
    for m in &motions {
        match (m.from, m.to) {
            (Some(f), Some(to)) if f != to => carried.push((m.index, next.release(f).ok(), to)),
            (Some(f), None) => {
                if let Ok(d) = next.release(f) {
                    let sink = if matches!(line.instrs[m.index], Instruction::Waste(_)) {
                        Sink::Waste
                    } else {
                        Sink::Output
                    };
                    events.push(Event::Removed { t, id: d.id, cf: d.cf, loc: f, sink });
                }
            }
            _ => {}
        }
    }
    for (idx, instr) in line.instrs.iter().enumerate() {
        if !motions.iter().any(|m| m.index == idx) {
            continue;
        }
        match instr {
            Instruction::Dispense(loc) => {
                let k = next.reagent_at(*loc).expect("checked reagent reservoir");
                let d = next.reagent_droplet(k, *loc);
                events.push(Event::Dispensed { t, id: d.id, reagent: k, loc: *loc });
                if next.grid.get(*loc) {
                    report(Failure::DoubleClaim { loc: *loc }, &[idx]);
                } else {
                    next.claim(*loc, d).expect("free cell");
                }
            }
            Instruction::MixStart { a, b, t_mix, mtype } => {
                next.start_mixer(*a, *b, *t_mix, *mtype);
                let ids = next.mixers.last().expect("just pushed").input_ids;
                events.push(Event::MixStarted { t, a: *a, b: *b, ids });
            }
            Instruction::DetectStart(id) => {
                if let Some(decl) = detectors.iter().find(|d| &d.id == id) {
                    next.start_detection(&decl.id, decl.loc, decl.duration);
                    events.push(Event::DetectStarted { t, detector: decl.id.clone(), loc: decl.loc });
                }
            }
            _ => {}
        }
    }
    for (idx, droplet, to) in carried {
        let Some(d) = droplet else { continue };
        if next.grid.get(to) {
            report(Failure::DoubleClaim { loc: to }, &[idx]);
        } else {
            next.claim(to, d).expect("free cell");
        }
    }

    // Global separation on the committed state, blamed on the arrivals.
    for (p, q) in separation_conflicts(&next) {
        let blamed: Vec<usize> = motions
            .iter()
            .filter(|m| m.to.is_some_and(|to| (to == p || to == q) && m.from != m.to))
            .map(|m| m.index)
            .collect();
        if !blamed.is_empty() {
            report(Failure::StaticFc { cells: vec![p, q] }, &blamed);
        }
    }

    StepOutcome { start, next, violations, events, motions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    /// Stop at the first violation.
    #[default]
    FirstError,
    /// Keep going; later violations are flagged secondary.
    All,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub policy: Policy,
    /// Overrides the program's own completion bound.
    pub t_max: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct TickRecord {
    pub t: u32,
    pub state: ChipState,
    pub events: Vec<Event>,
}

/// Per-line states and events of one run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub initial: ChipState,
    pub ticks: Vec<TickRecord>,
    pub final_t: u32,
    /// Tick of the first violation, if any; the trace stops there in
    /// first-error mode.
    pub halted_at: Option<u32>,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.ticks.iter().flat_map(|r| &r.events)
    }

    /// Chip as seen at the start of tick `t`, after mixer expiry and before
    /// the line issued at `t` (if any) takes effect.
    pub fn state_before(&self, t: u32) -> ChipState {
        let mut s = self
            .ticks
            .iter()
            .rev()
            .find(|r| r.t < t)
            .map_or_else(|| self.initial.clone(), |r| r.state.clone());
        s.begin_tick(t);
        s.expire_mixers(t);
        s
    }

    /// Chip after the line at `t` (or the latest earlier line) committed.
    pub fn state_at(&self, t: u32) -> ChipState {
        let mut s = self
            .ticks
            .iter()
            .rev()
            .find(|r| r.t <= t)
            .map_or_else(|| self.initial.clone(), |r| r.state.clone());
        if s.t < t {
            s.begin_tick(t);
            s.expire_mixers(t);
        }
        s
    }

    /// Droplets delivered to output reservoirs, in delivery order.
    pub fn outputs(&self) -> Vec<CfVector> {
        self.events()
            .filter_map(|e| match e {
                Event::Removed { cf, sink: Sink::Output, .. } => Some(cf.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Extra per-tick checks layered on the fluidic stepper.
pub trait TickHook {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation>;
}

impl TickHook for () {
    fn check(&mut self, _: &TimedLine, _: &StepOutcome) -> Vec<Violation> {
        Vec::new()
    }
}

impl<A: TickHook, B: TickHook> TickHook for (A, B) {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation> {
        let mut v = self.0.check(line, outcome);
        v.extend(self.1.check(line, outcome));
        v
    }
}

impl<H: TickHook + ?Sized> TickHook for &mut H {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation> {
        (**self).check(line, outcome)
    }
}

/// Runs `lines` on a fresh chip, with `hook` adding checks after each tick.
pub fn run_lines(
    p: &Program,
    lines: &[TimedLine],
    opts: &VerifyOptions,
    hook: &mut dyn TickHook,
) -> (Trace, Report) {
    let mut state = ChipState::new(&p.header);
    let mut trace = Trace { initial: state.clone(), ticks: Vec::new(), final_t: 0, halted_at: None };
    let mut report = Report::new(0);
    for line in lines {
        let outcome = step(&state, line, &p.detectors);
        let mut found = outcome.violations.clone();
        found.extend(hook.check(line, &outcome));
        for mut v in found {
            if trace.halted_at.is_some_and(|t0| line.t > t0) {
                v.secondary = true;
            }
            report.violations.push(v);
        }
        if trace.halted_at.is_none() && !report.violations.is_empty() {
            trace.halted_at = Some(line.t);
        }
        trace.final_t = line.t;
        state = outcome.next;
        trace.ticks.push(TickRecord { t: line.t, state: state.clone(), events: outcome.events });
        if opts.policy == Policy::FirstError && !report.violations.is_empty() {
            report.violations.truncate(1);
            break;
        }
    }
    report.final_t = trace.final_t;
    for m in &state.mixers {
        report.notes.push(format!(
            "mixer {}-{} started at t={} still active at t={} (ends at {})",
            m.a, m.b, m.t_s, trace.final_t, m.t_e
        ));
    }
    if let Some(t_max) = opts.t_max.or(p.t_max) {
        let halted = opts.policy == Policy::FirstError && trace.halted_at.is_some();
        if trace.final_t > t_max && !halted {
            report.violations.push(classify(Failure::Tmax { final_t: trace.final_t, t_max }, None, "", 0));
        }
    }
    (trace, report)
}

/// Verifies the main timeline of a program without conditionals.
pub fn verify_program(p: &Program, opts: &VerifyOptions) -> (Trace, Report) {
    run_lines(p, &p.main, opts, &mut ())
}
