//! Error taxonomy, violation records and report formatting.

use std::fmt::Write;

use serde::Serialize;

use crate::isa::{Loc, MixerType};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Code {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    PinCase1,
    PinCase2,
    PinCase3,
    PinDispense,
    Structural,
    Tmax,
}

impl Code {
    pub fn label(self) -> &'static str {
        match self {
            Code::E1 => "e1",
            Code::E2 => "e2",
            Code::E3 => "e3",
            Code::E4 => "e4",
            Code::E5 => "e5",
            Code::E6 => "e6",
            Code::E7 => "e7",
            Code::PinCase1 => "pin-case1",
            Code::PinCase2 => "pin-case2",
            Code::PinCase3 => "pin-case3",
            Code::PinDispense => "pin-dispense",
            Code::Structural => "structural",
            Code::Tmax => "tmax",
        }
    }

    /// Consequence column of the error taxonomy.
    pub fn consequence(self) -> &'static str {
        match self {
            Code::E1 | Code::E2 => "Unintentional mix of droplets",
            Code::E3 | Code::E4 => "Incorrect fluidic operation",
            Code::E5 => "Droplet routing error or Incorrect fluidic operation",
            Code::E6 => "Inhomogeneous mixing",
            Code::E7 => "Incorrect realization of input assay",
            Code::PinCase1 => "Unintentional split",
            Code::PinCase2 | Code::PinCase3 | Code::PinDispense => "Droplet stretch or stuck droplet",
            Code::Structural => "Malformed instruction",
            Code::Tmax => "Completion time exceeded",
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            Code::E6 | Code::E7 | Code::Tmax => Phase::Realization,
            _ => Phase::Design,
        }
    }

    pub fn is_pin(self) -> bool {
        matches!(self, Code::PinCase1 | Code::PinCase2 | Code::PinCase3 | Code::PinDispense)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Constraint checking on the instruction stream.
    Design,
    /// Reconstruction and conformance.
    Realization,
}

/// A raw check failure, before it is given a code and wording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    StaticFc { cells: Vec<Loc> },
    DynamicFc { cells: Vec<Loc> },
    InvalidReservoir { loc: Loc, wanted: &'static str },
    ActiveMixer { loc: Loc },
    UnderDetection { loc: Loc },
    DetectorBusy { detector: String, loc: Loc },
    /// `ready_at == None` when the detector was never started on this path.
    DetectorNotReady { detector: String, ready_at: Option<u32> },
    WrongDropletCount { missing: Vec<Loc> },
    NoDropletAtSource { loc: Loc },
    NoDropletAtDetector { detector: String, loc: Loc },
    DoubleClaim { loc: Loc },
    Geometry { a: Loc, b: Loc, mtype: MixerType },
    ShortMix { node: String, actual: u32, spec: u32 },
    WrongMix { produced: String, specified: String },
    MissingNode { signature: String },
    ExtraNode { signature: String },
    Tmax { final_t: u32, t_max: u32 },
    Pin { code: Code, cells: Vec<Loc>, pins: Vec<u32>, consequence: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: Code,
    pub phase: Phase,
    pub t: Option<u32>,
    /// Offending instruction(s) in compact form, space separated.
    pub instruction: String,
    pub response: String,
    pub cause: String,
    pub cells: Vec<Loc>,
    pub pins: Vec<u32>,
    pub detail: String,
    pub path: Option<String>,
    /// Set when an earlier violation may have caused this one.
    pub secondary: bool,
    /// 1-based source line, 0 when not tied to a line.
    pub line: usize,
}

fn cells_text(cells: &[Loc]) -> String {
    cells.iter().map(Loc::to_string).collect::<Vec<_>>().join(", ")
}

/// Maps a failure to its code and wording.
pub fn classify(failure: Failure, t: Option<u32>, instruction: &str, line: usize) -> Violation {
    let mut cells = Vec::new();
    let mut pins = Vec::new();
    let mut cause = None;
    let (code, response, detail) = match failure {
        Failure::StaticFc { cells: c } => {
            let d = format!("droplets within one cell: {}", cells_text(&c));
            cells = c;
            (Code::E1, "Static fluidic constraint violated".to_string(), d)
        }
        Failure::DoubleClaim { loc } => {
            cells = vec![loc];
            (Code::E1, "Static fluidic constraint violated".to_string(), format!("{loc} claimed twice"))
        }
        Failure::DynamicFc { cells: c } => {
            let d = format!("destination neighbors moving droplet(s) at {}", cells_text(&c));
            cells = c;
            (Code::E2, "Dynamic fluidic constraint violated".to_string(), d)
        }
        Failure::InvalidReservoir { loc, wanted } => {
            cells = vec![loc];
            (
                Code::E3,
                if wanted == "reagent" {
                    "Dispense from invalid input reservoir".to_string()
                } else {
                    format!("Dispense to invalid {wanted} reservoir")
                },
                format!("{loc} is not a {wanted} reservoir"),
            )
        }
        Failure::ActiveMixer { loc } => {
            cells = vec![loc];
            (Code::E4, format!("Droplet on {loc} is in active mixer"), String::new())
        }
        Failure::UnderDetection { loc } => {
            cells = vec![loc];
            (Code::E4, format!("Droplet on {loc} is under detection"), String::new())
        }
        Failure::DetectorBusy { detector, loc } => {
            cells = vec![loc];
            (Code::E4, format!("Detector {detector} is busy"), String::new())
        }
        Failure::DetectorNotReady { detector, ready_at } => (
            Code::E4,
            format!("Detector {detector} has not finished"),
            match ready_at {
                Some(t) => format!("result available at t={t}"),
                None => "detector never started".to_string(),
            },
        ),
        Failure::WrongDropletCount { missing } => {
            let names: Vec<String> = missing.iter().map(Loc::to_string).collect();
            cells = missing;
            (Code::E5, format!("Droplet is not present on {}", names.join(" and ")), String::new())
        }
        Failure::NoDropletAtSource { loc } => {
            cells = vec![loc];
            (Code::E5, format!("Droplet is not present on {loc}"), String::new())
        }
        Failure::NoDropletAtDetector { detector, loc } => {
            cells = vec![loc];
            (
                Code::E5,
                format!("Droplet is not present on {loc}"),
                format!("detector {detector} has nothing to sense"),
            )
        }
        Failure::Geometry { a, b, mtype } => {
            cells = vec![a, b];
            (
                Code::Structural,
                format!("Mixer endpoints {a} and {b} do not fit a {}", mixer_name(mtype)),
                String::new(),
            )
        }
        Failure::ShortMix { node, actual, spec } => {
            cause = Some("Mixing performed for lesser time".to_string());
            (Code::E6, "Inhomogeneous mixing".to_string(), format!("{node}: mixed {actual} < {spec}"))
        }
        Failure::WrongMix { produced, specified } => {
            cause = Some("Wrong mix operation performed".to_string());
            (
                Code::E7,
                "Incorrect realization of input sequencing graph".to_string(),
                format!("ratio {produced} produced, {specified} specified"),
            )
        }
        Failure::MissingNode { signature } => {
            cause = Some("Wrong mix operation performed".to_string());
            (
                Code::E7,
                "Incorrect realization of input sequencing graph".to_string(),
                format!("{signature} specified but not produced"),
            )
        }
        Failure::ExtraNode { signature } => {
            cause = Some("Wrong mix operation performed".to_string());
            (
                Code::E7,
                "Incorrect realization of input sequencing graph".to_string(),
                format!("{signature} produced but not specified"),
            )
        }
        Failure::Tmax { final_t, t_max } => (
            Code::Tmax,
            "Completion time exceeds T_max".to_string(),
            format!("finished at t={final_t}, limit {t_max}"),
        ),
        Failure::Pin { code, cells: c, pins: p, consequence } => {
            cells = c;
            pins = p;
            cause = Some(consequence.clone());
            (code, consequence, String::new())
        }
    };
    Violation {
        code,
        phase: code.phase(),
        t,
        instruction: instruction.to_string(),
        response,
        cause: cause.unwrap_or_else(|| code.consequence().to_string()),
        cells,
        pins,
        detail,
        path: None,
        secondary: false,
        line,
    }
}

fn mixer_name(m: MixerType) -> &'static str {
    match m {
        MixerType::H14 => "1x4 mixer",
        MixerType::V41 => "4x1 mixer",
    }
}

impl Violation {
    /// `Pin({(4,3),(13,5)}) = 6` style assignment text for pin rows.
    pub fn pin_assignment(&self) -> String {
        let cells: Vec<String> = self.cells.iter().map(Loc::to_string).collect();
        let pins: Vec<String> = self.pins.iter().map(u32::to_string).collect();
        format!("Pin({{{}}}) = {}", cells.join(","), pins.join(","))
    }
}

/// Outcome of verifying one execution path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub path: Option<String>,
    pub final_t: u32,
    pub violations: Vec<Violation>,
    /// Informational remarks that are not violations.
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(final_t: u32) -> Self {
        Report { path: None, final_t, violations: Vec::new(), notes: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<Code> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    passed: bool,
    reports: &'a [Report],
}

/// Renders reports. Text mirrors the tabular layout (phase, response, t,
/// instruction); JSON is one record per violation under a schema version.
pub fn format_report(reports: &[Report], format: Format) -> String {
    match format {
        Format::Json => {
            let doc = Document {
                schema_version: SCHEMA_VERSION,
                passed: reports.iter().all(Report::passed),
                reports,
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => {
            let mut out = String::new();
            for r in reports {
                if reports.len() > 1 || r.path.is_some() {
                    let _ = writeln!(out, "== path {} ==", r.path.as_deref().unwrap_or("-"));
                }
                format_one(&mut out, r);
            }
            out
        }
    }
}

fn format_one(out: &mut String, r: &Report) {
    if r.passed() {
        let _ = writeln!(out, "PASS (t={})", r.final_t);
    } else {
        let design: Vec<&Violation> =
            r.violations.iter().filter(|v| v.phase == Phase::Design && !v.code.is_pin()).collect();
        let pins: Vec<&Violation> = r.violations.iter().filter(|v| v.code.is_pin()).collect();
        let realization: Vec<&Violation> =
            r.violations.iter().filter(|v| v.phase == Phase::Realization).collect();
        if !design.is_empty() {
            let _ = writeln!(out, "Phase I - Design constraint checking");
            let w = design.iter().map(|v| v.response.len()).max().unwrap_or(0);
            for v in design {
                let t = v.t.map_or("-".to_string(), |t| t.to_string());
                let _ = write!(out, "{:<4} {:<w$}  {:>3}  {}", v.code.label(), v.response, t, v.instruction);
                if v.secondary {
                    out.push_str("  [secondary]");
                }
                out.push('\n');
            }
        }
        if !pins.is_empty() {
            let _ = writeln!(out, "Pin-constrained checking");
            let rows: Vec<(String, &Violation)> = pins.iter().map(|v| (v.pin_assignment(), *v)).collect();
            let wa = rows.iter().map(|(a, _)| a.len()).max().unwrap_or(0);
            let wr = rows.iter().map(|(_, v)| v.response.len()).max().unwrap_or(0);
            for (assign, v) in rows {
                let t = v.t.map_or("-".to_string(), |t| t.to_string());
                let _ = write!(out, "{assign:<wa$}  {:<wr$}  {:>3}  {}", v.response, t, v.instruction);
                if v.secondary {
                    out.push_str("  [secondary]");
                }
                out.push('\n');
            }
        }
        if !realization.is_empty() {
            let _ = writeln!(out, "Phase II - Realization error checking");
            let w = realization.iter().map(|v| v.response.len()).max().unwrap_or(0);
            for v in realization {
                let _ = writeln!(out, "{:<4} {:<w$}  {} ({})", v.code.label(), v.response, v.cause, v.detail);
            }
        }
        let _ = writeln!(out, "FAIL: {} violation(s), t={}", r.violations.len(), r.final_t);
    }
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
}
