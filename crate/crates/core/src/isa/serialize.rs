use std::fmt::Write;

use super::{Program, ReservoirKind, TimedLine};

/// Canonical text form. Moves and mixes use the arrow syntax; every header
/// item is emitted in a fixed order so that `parse -> serialize` is a
/// normalizing projection.
pub fn serialize_program(p: &Program) -> String {
    let mut out = String::new();
    let h = &p.header;
    let _ = writeln!(out, "dim({},{})", h.rows, h.cols);
    let _ = writeln!(out, "accuracy {}", h.accuracy);
    if !h.reservoirs.is_empty() {
        let decls: Vec<String> = h
            .reservoirs
            .iter()
            .map(|r| match &r.kind {
                ReservoirKind::Reagent(name) => format!("R({},{},{})", r.loc.row, r.loc.col, name),
                ReservoirKind::Output => format!("O({},{})", r.loc.row, r.loc.col),
                ReservoirKind::Waste => format!("W({},{})", r.loc.row, r.loc.col),
            })
            .collect();
        let _ = writeln!(out, "{}", decls.join(" "));
    }
    if !p.detectors.is_empty() {
        let decls: Vec<String> = p
            .detectors
            .iter()
            .map(|d| format!("D({},{},{},{})", d.id, d.loc.row, d.loc.col, d.duration))
            .collect();
        let _ = writeln!(out, "{}", decls.join(" "));
    }
    if let Some(t) = p.t_max {
        let _ = writeln!(out, "tmax {t}");
    }
    write_lines(&mut out, &p.main);
    for (id, lines) in &p.recoveries {
        let _ = writeln!(out, "recovery {id}:");
        write_lines(&mut out, lines);
        let _ = writeln!(out, "endrecovery");
    }
    out
}

fn write_lines(out: &mut String, lines: &[TimedLine]) {
    for line in lines {
        let _ = write!(out, "{}", line.t);
        for i in &line.instrs {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
}
