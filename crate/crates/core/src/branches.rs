//! Execution paths of programs with conditional recovery calls.
//!
//! Recovery blocks are written with timestamps of the path on which every
//! conditional is taken. A path is fixed by one outcome per conditional, in
//! program order. Taken: the recovery lines are spliced in after the call.
//! Not taken: every later line moves earlier by the recovery's length, so
//! the main line resumes right after the call.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::diag::{classify, Failure, Report, Violation};
use crate::fluidics::{run_lines, StepOutcome, TickHook, Trace, VerifyOptions, Event};
use crate::graph::{conformance, reconstruct, ConformOptions, NodeKind, SeqGraph};
use crate::isa::{DetectorDecl, Instruction, Program, TimedLine};
use crate::pins::{PinHook, PinMap};

pub const DEFAULT_PATH_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BranchError {
    #[error("recovery `{recovery}` contains a conditional call on line {line}")]
    NestedConditional { recovery: String, line: usize },
    #[error("{k} conditionals give 2^{k} paths, over the limit of 2^{limit}")]
    PathLimitExceeded { k: usize, limit: usize },
    #[error("recovery `{recovery}` starts at t={start}, not after its call at t={call}")]
    RecoveryBeforeCall { recovery: String, start: u32, call: u32 },
    #[error("path {label}: line at t={t} does not come after t={prev}")]
    NonMonotonicSplice { label: String, t: u32, prev: u32 },
    #[error("path label `{label}` must be {k} characters of 0 and 1")]
    BadLabel { label: String, k: usize },
    #[error("undeclared recovery `{0}`")]
    UnknownRecovery(String),
}

/// One linear execution of a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpec {
    /// Outcome per conditional in program order; `true` means the recovery
    /// runs.
    pub taken: Vec<bool>,
    pub label: String,
    pub lines: Vec<TimedLine>,
}

fn label_of(taken: &[bool]) -> String {
    taken.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Parses a `0`/`1` label into outcomes for `k` conditionals.
pub fn parse_label(label: &str, k: usize) -> Result<Vec<bool>, BranchError> {
    let bad = || BranchError::BadLabel { label: label.to_string(), k };
    if label.chars().count() != k {
        return Err(bad());
    }
    label
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(bad()),
        })
        .collect()
}

fn check_recoveries(p: &Program) -> Result<(), BranchError> {
    for (id, lines) in &p.recoveries {
        for l in lines {
            if l.instrs.iter().any(|i| matches!(i, Instruction::CondCall { .. })) {
                return Err(BranchError::NestedConditional { recovery: id.clone(), line: l.line });
            }
        }
    }
    Ok(())
}

fn shifted(line: &TimedLine, shift: u32) -> TimedLine {
    let mut l = line.clone();
    l.t -= shift;
    l
}

/// Linear timeline for the given outcomes.
pub fn splice(p: &Program, taken: &[bool]) -> Result<PathSpec, BranchError> {
    check_recoveries(p)?;
    let k = p.conditional_count();
    if taken.len() != k {
        return Err(BranchError::BadLabel { label: label_of(taken), k });
    }
    let label = label_of(taken);
    let mut out: Vec<TimedLine> = Vec::new();
    let mut shift = 0u32;
    let mut c = 0;
    for (li, line) in p.main.iter().enumerate() {
        out.push(shifted(line, shift));
        let next_t = p.main.get(li + 1).map(|l| l.t);
        for ins in &line.instrs {
            let Instruction::CondCall { recovery, .. } = ins else { continue };
            let block = p.recoveries.get(recovery).ok_or_else(|| BranchError::UnknownRecovery(recovery.clone()))?;
            let (Some(first), Some(last)) = (block.first(), block.last()) else {
                c += 1;
                continue;
            };
            if first.t <= line.t {
                return Err(BranchError::RecoveryBeforeCall {
                    recovery: recovery.clone(),
                    start: first.t,
                    call: line.t,
                });
            }
            if taken[c] {
                out.extend(block.iter().map(|l| shifted(l, shift)));
            } else {
                // The recovery's length, but never so much that the next
                // main line lands on or before the call.
                let mut span = last.t - line.t;
                if let Some(n) = next_t {
                    span = span.min(n.saturating_sub(line.t + 1));
                }
                shift += span;
            }
            c += 1;
        }
    }
    for w in out.windows(2) {
        if w[1].t <= w[0].t {
            return Err(BranchError::NonMonotonicSplice { label, t: w[1].t, prev: w[0].t });
        }
    }
    Ok(PathSpec { taken: taken.to_vec(), label, lines: out })
}

/// All `2^k` paths in label order.
pub fn enumerate_paths(p: &Program, limit: usize) -> Result<Vec<PathSpec>, BranchError> {
    check_recoveries(p)?;
    let k = p.conditional_count();
    if k > limit {
        return Err(BranchError::PathLimitExceeded { k, limit });
    }
    (0..1u64 << k)
        .map(|bits| {
            let taken: Vec<bool> = (0..k).map(|i| bits >> (k - 1 - i) & 1 == 1).collect();
            splice(p, &taken)
        })
        .collect()
}

/// Flags conditionals whose detector has no finished result yet.
#[derive(Debug, Default)]
pub struct DetectorHook {
    durations: HashMap<String, u32>,
    ready: HashMap<String, u32>,
}

impl DetectorHook {
    pub fn new(detectors: &[DetectorDecl]) -> Self {
        DetectorHook {
            durations: detectors.iter().map(|d| (d.id.clone(), d.duration)).collect(),
            ready: HashMap::new(),
        }
    }
}

impl TickHook for DetectorHook {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation> {
        for e in &outcome.events {
            if let Event::DetectStarted { t, detector, .. } = e {
                let d = self.durations.get(detector).copied().unwrap_or(0);
                self.ready.insert(detector.clone(), t + d);
            }
        }
        let mut out = Vec::new();
        for ins in &line.instrs {
            let Instruction::CondCall { detector, .. } = ins else { continue };
            match self.ready.get(detector) {
                Some(&r) if r <= line.t => {}
                r => out.push(classify(
                    Failure::DetectorNotReady { detector: detector.clone(), ready_at: r.copied() },
                    Some(line.t),
                    &ins.compact(),
                    line.line,
                )),
            }
        }
        out
    }
}

/// Checker used on every path.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    General,
    Pins(&'a PinMap),
}

#[derive(Debug, Clone)]
pub struct PathOptions<'a> {
    pub verify: VerifyOptions,
    pub mode: Mode<'a>,
    /// Specification graph; enables conformance checks.
    pub spec: Option<&'a SeqGraph>,
    pub ignore_waste: bool,
    pub limit: usize,
}

impl Default for PathOptions<'_> {
    fn default() -> Self {
        PathOptions {
            verify: VerifyOptions::default(),
            mode: Mode::General,
            spec: None,
            ignore_waste: false,
            limit: DEFAULT_PATH_LIMIT,
        }
    }
}

/// Runs one path with the detector hook and, in pin mode, the pin hook.
pub fn run_path(p: &Program, path: &PathSpec, opts: &PathOptions) -> (Trace, Report) {
    let det = DetectorHook::new(&p.detectors);
    match opts.mode {
        Mode::General => run_lines(p, &path.lines, &opts.verify, &mut (det, ())),
        Mode::Pins(map) => run_lines(p, &path.lines, &opts.verify, &mut (det, PinHook::new(map))),
    }
}

/// Output vectors of a path against the specification's outputs, as
/// multisets of rounded vectors.
pub fn output_conformance(spec: &SeqGraph, synth: &SeqGraph, accuracy: u32) -> Vec<Violation> {
    let only_outputs = |g: &SeqGraph| {
        let mut h = SeqGraph::new(g.reagents.clone());
        for n in g.nodes.iter().filter(|n| n.kind == NodeKind::Output) {
            h.add_node(n.clone());
        }
        h
    };
    let r = conformance(
        &only_outputs(spec),
        &only_outputs(synth),
        &ConformOptions { accuracy, ..Default::default() },
    );
    r.violations
}

fn tag(report: &mut Report, label: &str, k: usize) {
    if k == 0 {
        return;
    }
    report.path = Some(label.to_string());
    for v in &mut report.violations {
        v.path = Some(label.to_string());
    }
}

/// Verifies one path and, with a specification, checks what it produced.
/// The path with no recovery taken must conform fully; every path must
/// deliver the specified outputs.
pub fn verify_path(p: &Program, path: &PathSpec, opts: &PathOptions) -> Report {
    let (trace, mut report) = run_path(p, path, opts);
    if let Some(spec) = opts.spec {
        if report.passed() {
            match reconstruct(&trace) {
                Ok(g) => {
                    let n = p.header.accuracy;
                    if path.taken.iter().all(|t| !t) {
                        let r = conformance(
                            spec,
                            &g,
                            &ConformOptions { accuracy: n, ignore_waste: opts.ignore_waste, t_max: None, final_t: trace.final_t },
                        );
                        report.violations.extend(r.violations);
                        report.notes.extend(r.notes);
                    } else {
                        report.violations.extend(output_conformance(spec, &g, n));
                    }
                }
                Err(e) => report.notes.push(format!("graph not reconstructed: {e}")),
            }
        }
    }
    tag(&mut report, &path.label, path.taken.len());
    report
}

/// Every path, verified in parallel; reports come back in label order.
pub fn verify_all_paths(p: &Program, opts: &PathOptions) -> Result<Vec<Report>, BranchError> {
    let paths = enumerate_paths(p, opts.limit)?;
    Ok(paths.par_iter().map(|path| verify_path(p, path, opts)).collect())
}
