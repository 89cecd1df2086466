//! Level-wise comparison of a realized graph against its specification.
//!
//! Both graphs are layered by longest path from the sources. Within a layer
//! nodes are matched as multisets of signatures (kind, reagent, vector
//! rounded to the chip accuracy). Matched mixes are then checked for mixing
//! time; unmatched nodes are reported as wrong, missing or extra operations.

use std::collections::{BTreeMap, BTreeSet};

use super::sg::{NodeKind, SeqGraph, SgNode};
use crate::diag::{classify, Failure, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformOptions {
    /// Fractional bits used when comparing vectors.
    pub accuracy: u32,
    /// Leave waste nodes out of both graphs.
    pub ignore_waste: bool,
    pub t_max: Option<u32>,
    pub final_t: u32,
}

impl Default for ConformOptions {
    fn default() -> Self {
        ConformOptions { accuracy: 5, ignore_waste: false, t_max: None, final_t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Source,
    Mix,
    Output,
    Waste,
    Other,
}

fn class(kind: &NodeKind) -> Class {
    match kind {
        NodeKind::Source(_) => Class::Source,
        NodeKind::Mix => Class::Mix,
        NodeKind::Output => Class::Output,
        NodeKind::Waste => Class::Waste,
        NodeKind::Start | NodeKind::End => Class::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Signature {
    class: Class,
    reagent: Option<String>,
    cf: Option<Vec<u128>>,
}

struct Prepared {
    nodes: Vec<SgNode>,
    level: Vec<usize>,
    sig: Vec<Signature>,
    ratio: Vec<String>,
}

fn prepare(g: &SeqGraph, reagents: &[String], opts: &ConformOptions) -> Prepared {
    let mut g = g.clone();
    if opts.ignore_waste {
        let keep: Vec<bool> = g.nodes.iter().map(|n| n.kind != NodeKind::Waste).collect();
        let mut remap = vec![usize::MAX; g.nodes.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = next;
                next += 1;
            }
        }
        g.edges = g
            .edges
            .iter()
            .filter(|(a, b)| keep[*a] && keep[*b])
            .map(|&(a, b)| (remap[a], remap[b]))
            .collect();
        g.nodes = g.nodes.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| n).collect();
    }
    for n in &mut g.nodes {
        n.cf = n.cf.as_ref().and_then(|cf| cf.remap(&g.reagents, reagents));
    }
    let level = g.levels().unwrap_or_else(|_| vec![0; g.nodes.len()]);
    let sig = g
        .nodes
        .iter()
        .map(|n| Signature {
            class: class(&n.kind),
            reagent: match &n.kind {
                NodeKind::Source(r) => Some(r.clone()),
                _ => None,
            },
            cf: n.cf.as_ref().map(|cf| cf.rounded_numerators(opts.accuracy)),
        })
        .collect();
    let ratio = g
        .nodes
        .iter()
        .map(|n| n.cf.as_ref().map_or_else(|| "(?)".to_string(), |cf| cf.ratio(opts.accuracy)))
        .collect();
    Prepared { nodes: g.nodes, level, sig, ratio }
}

fn describe(p: &Prepared, v: usize) -> String {
    match &p.nodes[v].kind {
        NodeKind::Source(r) => format!("dispense {r}"),
        NodeKind::Mix => format!("mix {}", p.ratio[v]),
        NodeKind::Output => format!("output {}", p.ratio[v]),
        NodeKind::Waste => format!("waste {}", p.ratio[v]),
        NodeKind::Start => "start".into(),
        NodeKind::End => "end".into(),
    }
}

/// Mixing-time rule for a specified node `spec` realized by `real`.
fn check_duration(spec: &SgNode, real: &SgNode, report: &mut Report) {
    let (Some(want), Some(got)) = (spec.t_mix, real.duration()) else { return };
    if got < want {
        report.violations.push(classify(
            Failure::ShortMix { node: spec.id.clone(), actual: got, spec: want },
            None,
            "",
            0,
        ));
    } else if got > want {
        report.notes.push(format!("{}: mixed {got} > {want}", spec.id));
    }
}

/// Compares `synth` against `input`. Violations carry no tick; the report's
/// `final_t` is taken from `opts`.
pub fn conformance(input: &SeqGraph, synth: &SeqGraph, opts: &ConformOptions) -> Report {
    let mut reagents = input.reagents.clone();
    for r in &synth.reagents {
        if !reagents.contains(r) {
            reagents.push(r.clone());
        }
    }
    let a = prepare(input, &reagents, opts);
    let b = prepare(synth, &reagents, opts);
    let mut report = Report::new(opts.final_t);
    let mut seen_wrong = BTreeSet::new();

    let depth = a.level.iter().chain(&b.level).copied().max().map_or(0, |d| d + 1);
    for lv in 0..depth {
        let group = |p: &Prepared| {
            let mut m: BTreeMap<Signature, Vec<usize>> = BTreeMap::new();
            for v in (0..p.nodes.len()).filter(|&v| p.level[v] == lv && class(&p.nodes[v].kind) != Class::Other) {
                m.entry(p.sig[v].clone()).or_default().push(v);
            }
            m
        };
        let (ga, mut gb) = (group(&a), group(&b));
        let mut left_a: Vec<usize> = Vec::new();
        for (sig, mut xs) in ga {
            let mut ys = gb.remove(&sig).unwrap_or_default();
            if sig.class == Class::Mix {
                xs.sort_by_key(|&v| std::cmp::Reverse(a.nodes[v].t_mix));
                ys.sort_by_key(|&v| std::cmp::Reverse(b.nodes[v].duration()));
            }
            let k = xs.len().min(ys.len());
            for (&x, &y) in xs.iter().zip(&ys).take(k) {
                check_duration(&a.nodes[x], &b.nodes[y], &mut report);
            }
            left_a.extend(&xs[k..]);
            // Surplus realized nodes of a matched signature go back to the pool.
            if ys.len() > k {
                gb.insert(sig, ys[k..].to_vec());
            }
        }
        let mut left_b: Vec<usize> = gb.into_values().flatten().collect();
        left_b.sort_by_key(|&v| (b.sig[v].class.clone(), v));
        left_a.sort_by_key(|&v| (a.sig[v].class.clone(), v));

        for &x in &left_a {
            let cls = &a.sig[x].class;
            match left_b.iter().position(|&y| &b.sig[y].class == cls) {
                Some(i) => {
                    let y = left_b.remove(i);
                    if *cls == Class::Mix {
                        check_duration(&a.nodes[x], &b.nodes[y], &mut report);
                    }
                    let (produced, specified) = match cls {
                        Class::Source => (describe(&b, y), describe(&a, x)),
                        _ => (b.ratio[y].clone(), a.ratio[x].clone()),
                    };
                    if seen_wrong.insert((produced.clone(), specified.clone())) {
                        report.violations.push(classify(Failure::WrongMix { produced, specified }, None, "", 0));
                    }
                }
                None => report.violations.push(classify(
                    Failure::MissingNode { signature: describe(&a, x) },
                    None,
                    "",
                    0,
                )),
            }
        }
        for y in left_b {
            report.violations.push(classify(Failure::ExtraNode { signature: describe(&b, y) }, None, "", 0));
        }
    }

    if let Some(t_max) = opts.t_max {
        if opts.final_t > t_max {
            report.violations.push(classify(Failure::Tmax { final_t: opts.final_t, t_max }, None, "", 0));
        }
    }
    report
}
