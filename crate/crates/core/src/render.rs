//! Static snapshots of a trace as ASCII grids or SVG.

use std::fmt::Write as _;

use thiserror::Error;

use crate::chip::DropletId;
use crate::diag::{Report, Violation};
use crate::fluidics::Trace;
use crate::isa::Loc;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("t={t} is past the end of the run (last tick {last})")]
    OutOfRange { t: u32, last: u32 },
    #[error("t={t} is past the first violation at t={halted_at}")]
    PastViolation { t: u32, halted_at: u32 },
}

/// One tick of the chip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub t: u32,
    /// Row-major glyphs; `!` marks cells named by the violation.
    pub glyphs: Vec<Vec<char>>,
    /// Droplets by id with their cells, in row-major order.
    pub legend: Vec<(DropletId, Loc)>,
    pub violation: Option<Violation>,
}

/// Last renderable tick: the first violation if any, else the end of the run.
pub fn last_tick(trace: &Trace) -> u32 {
    trace.halted_at.unwrap_or(trace.final_t)
}

/// Frame at tick `t`; t=0 is the bare chip.
pub fn frame_at(trace: &Trace, report: &Report, t: u32) -> Result<Frame, RenderError> {
    if let Some(h) = trace.halted_at {
        if t > h {
            return Err(RenderError::PastViolation { t, halted_at: h });
        }
    }
    if t > trace.final_t {
        return Err(RenderError::OutOfRange { t, last: trace.final_t });
    }
    let state = if t == 0 { trace.initial.clone() } else { trace.state_at(t) };
    let mut glyphs = state.snapshot();
    let violation = match trace.halted_at {
        Some(h) if h == t => report.violations.iter().find(|v| v.t == Some(t)).cloned(),
        _ => None,
    };
    if let Some(v) = &violation {
        for c in &v.cells {
            if state.dims().in_bounds(*c) {
                glyphs[(c.row - 1) as usize][(c.col - 1) as usize] = '!';
            }
        }
    }
    let legend = state.droplets().map(|d| (d.id, d.loc)).collect();
    Ok(Frame { t, glyphs, legend, violation })
}

/// Frames 1 through [`last_tick`].
pub fn animate(trace: &Trace, report: &Report) -> Vec<Frame> {
    (1..=last_tick(trace)).map(|t| frame_at(trace, report, t).expect("tick within run")).collect()
}

pub fn to_ascii(f: &Frame) -> String {
    let cols = f.glyphs.first().map_or(0, Vec::len);
    let rows = f.glyphs.len();
    let w = cols.max(rows).to_string().len();
    let mut out = format!("t={}\n", f.t);
    let _ = write!(out, "{:w$} ", "");
    for c in 1..=cols {
        let _ = write!(out, " {c:>w$}");
    }
    out.push('\n');
    for (r, row) in f.glyphs.iter().enumerate() {
        let _ = write!(out, "{:>w$} ", r + 1);
        for g in row {
            let _ = write!(out, " {g:>w$}");
        }
        out.push('\n');
    }
    if !f.legend.is_empty() {
        let items: Vec<String> = f.legend.iter().map(|(id, loc)| format!("#{id}{loc}")).collect();
        let _ = writeln!(out, "droplets: {}", items.join(" "));
    }
    if let Some(v) = &f.violation {
        let _ = writeln!(out, "violation {}: {} [{}]", v.code.label(), v.response, v.instruction);
    }
    out
}

const CELL: usize = 24;

fn fill(g: char) -> &'static str {
    match g {
        'D' => "#3b7dd8",
        'M' => "#f2c14e",
        'R' => "#8fd694",
        'O' => "#b8b8f0",
        'W' => "#c9a27e",
        '!' => "#e05252",
        _ => "#f4f4f4",
    }
}

pub fn to_svg(f: &Frame) -> String {
    let cols = f.glyphs.first().map_or(0, Vec::len);
    let rows = f.glyphs.len();
    let (w, h) = (cols * CELL, rows * CELL + CELL);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"10\">\n"
    );
    let _ = writeln!(out, "<text x=\"2\" y=\"{}\">t={}</text>", CELL - 8, f.t);
    for (r, row) in f.glyphs.iter().enumerate() {
        for (c, g) in row.iter().enumerate() {
            let (x, y) = (c * CELL, (r + 1) * CELL);
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\" stroke=\"#999\"/>",
                fill(*g)
            );
            if *g != '.' {
                let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{g}</text>", x + 8, y + 16);
            }
        }
    }
    for (id, loc) in &f.legend {
        let (x, y) = ((loc.col as usize - 1) * CELL, loc.row as usize * CELL);
        let _ = writeln!(out, "<title>droplet {id} at {loc}</title><circle cx=\"{}\" cy=\"{}\" r=\"2\"/>", x + 20, y + 4);
    }
    if let Some(v) = &f.violation {
        let _ = writeln!(out, "<desc>{} {}</desc>", v.code.label(), xml_escape(&v.response));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
