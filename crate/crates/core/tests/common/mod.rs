//! Test-only oracles and generators shared by the property suites and the
//! acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dmfv::chip::ChipState;
use dmfv::fluidics::{
    active_mixer_guard, check_dispense, check_mix_start, check_move, static_fc, step, Event, Sink, Trace,
};
use dmfv::graph::{NodeKind, SeqGraph, SgNode};
use dmfv::pins::PinMap;
use dmfv::isa::{
    ChipHeader, Instruction, Loc, MixerType, Program, ReservoirDecl, ReservoirKind, TimedLine,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

// ---------------------------------------------------------------------------
// Literal Boolean formulas over the occupancy variables.

/// Atoms read directly off the scenario, never off the library state.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(bool),
    /// Droplet on the cell.
    X(Loc),
    /// Cell inside an active mixer strip, endpoints excluded.
    Interior(Loc),
    /// Cell anywhere on an active mixer strip.
    Span(Loc),
    /// Droplet pinned as a mixer endpoint.
    Held(Loc),
    Not(Box<Expr>),
    And(Vec<Expr>),
}

fn not(e: Expr) -> Expr {
    Expr::Not(Box::new(e))
}

/// Hand-built scenario: occupied cells plus at most one running mixer.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub rows: u32,
    pub cols: u32,
    pub occupied: BTreeSet<Loc>,
    /// Endpoints and orientation of the running mixer.
    pub mixer: Option<(Loc, Loc, bool)>,
    pub reservoir: Loc,
}

impl Scenario {
    fn inside(&self, r: i64, c: i64) -> Option<Loc> {
        (r >= 1 && c >= 1 && r <= self.rows as i64 && c <= self.cols as i64).then(|| Loc::new(r as u32, c as u32))
    }

    fn strip(&self) -> Vec<Loc> {
        match self.mixer {
            None => vec![],
            Some((a, b, horizontal)) => {
                if horizontal {
                    (a.col.min(b.col)..=a.col.max(b.col)).map(|c| Loc::new(a.row, c)).collect()
                } else {
                    (a.row.min(b.row)..=a.row.max(b.row)).map(|r| Loc::new(r, a.col)).collect()
                }
            }
        }
    }

    pub fn eval(&self, e: &Expr) -> bool {
        match e {
            Expr::Const(b) => *b,
            Expr::X(l) => self.occupied.contains(l),
            Expr::Interior(l) => {
                self.strip().contains(l) && self.mixer.is_some_and(|(a, b, _)| *l != a && *l != b)
            }
            Expr::Span(l) => self.strip().contains(l),
            Expr::Held(l) => self.mixer.is_some_and(|(a, b, _)| *l == a || *l == b),
            Expr::Not(x) => !self.eval(x),
            Expr::And(xs) => xs.iter().all(|x| self.eval(x)),
        }
    }

    /// Every in-bounds cell of the 3x3 block around `l`, except `l`.
    fn ring(&self, l: Loc) -> Vec<Loc> {
        let mut out = Vec::new();
        for dr in -1..=1 {
            for dc in -1..=1 {
                if (dr, dc) != (0, 0) {
                    out.extend(self.inside(l.row as i64 + dr, l.col as i64 + dc));
                }
            }
        }
        out
    }

    /// No droplet around `l`.
    pub fn static_formula(&self, l: Loc) -> Expr {
        Expr::And(self.ring(l).into_iter().map(|n| not(Expr::X(n))).collect())
    }

    /// Dispense on `l`: a reagent reservoir, nothing on or around it, and no
    /// mixer strip on it or interior next to it.
    pub fn dispense_formula(&self, l: Loc) -> Expr {
        let mut terms = vec![Expr::Const(l == self.reservoir), not(Expr::X(l)), not(Expr::Span(l))];
        for n in self.ring(l) {
            terms.push(not(Expr::X(n)));
            terms.push(not(Expr::Interior(n)));
        }
        Expr::And(terms)
    }

    /// The three cells beyond `dst`, written out per direction.
    pub fn beyond(&self, src: Loc, dst: Loc) -> Vec<Loc> {
        let (i, j) = (src.row as i64, src.col as i64);
        let cells = if dst.col > src.col {
            [(i - 1, j + 2), (i, j + 2), (i + 1, j + 2)]
        } else if dst.col < src.col {
            [(i - 1, j - 2), (i, j - 2), (i + 1, j - 2)]
        } else if dst.row < src.row {
            [(i - 2, j - 1), (i - 2, j), (i - 2, j + 1)]
        } else {
            [(i + 2, j - 1), (i + 2, j), (i + 2, j + 1)]
        };
        cells.iter().filter_map(|&(r, c)| self.inside(r, c)).collect()
    }

    pub fn move_formula(&self, src: Loc, dst: Loc) -> Expr {
        let mut terms = vec![Expr::X(src), not(Expr::Held(src)), not(Expr::Span(dst))];
        for e in self.beyond(src, dst) {
            terms.push(not(Expr::X(e)));
            terms.push(not(Expr::Interior(e)));
        }
        Expr::And(terms)
    }

    pub fn mix_formula(&self, a: Loc, b: Loc, horizontal: bool) -> Expr {
        let fits = if horizontal {
            a.row == b.row && a.col.abs_diff(b.col) == 3
        } else {
            a.col == b.col && a.row.abs_diff(b.row) == 3
        };
        let mut terms = vec![Expr::X(a), Expr::X(b), not(Expr::Held(a)), not(Expr::Held(b)), Expr::Const(fits)];
        for l in [a, b] {
            for n in self.ring(l) {
                terms.push(not(Expr::X(n)));
                terms.push(not(Expr::Span(n)));
            }
        }
        Expr::And(terms)
    }

    /// Strip plus its ring clear of everything but the two endpoints.
    pub fn guard_formula(&self) -> Expr {
        let Some((a, b, _)) = self.mixer else { return Expr::Const(true) };
        let mut region = BTreeSet::new();
        for l in self.strip() {
            region.insert(l);
            region.extend(self.ring(l));
        }
        Expr::And(region.into_iter().filter(|&l| l != a && l != b).map(|l| not(Expr::X(l))).collect())
    }

    /// The same scenario as a library chip state at tick 1.
    pub fn to_state(&self) -> ChipState {
        let header = ChipHeader {
            rows: self.rows,
            cols: self.cols,
            accuracy: 4,
            reservoirs: vec![ReservoirDecl { loc: self.reservoir, kind: ReservoirKind::Reagent("A".into()) }],
        };
        let mut s = ChipState::new(&header);
        s.begin_tick(1);
        for &l in &self.occupied {
            s.claim(l, s.reagent_droplet(0, l)).unwrap();
        }
        if let Some((a, b, h)) = self.mixer {
            s.start_mixer(a, b, 3, if h { MixerType::H14 } else { MixerType::V41 });
        }
        s.begin_tick(2);
        s
    }
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let rows = rng.gen_range(1..=8);
    let cols = rng.gen_range(1..=8);
    let cell = |rng: &mut ChaCha8Rng| Loc::new(rng.gen_range(1..=rows), rng.gen_range(1..=cols));
    let reservoir = cell(rng);
    let mut occupied = BTreeSet::new();
    let density = rng.gen_range(0.0..0.35);
    for r in 1..=rows {
        for c in 1..=cols {
            if rng.gen_bool(density) {
                occupied.insert(Loc::new(r, c));
            }
        }
    }
    let mut mixer = None;
    if rng.gen_bool(0.4) {
        let horizontal = rng.gen_bool(0.5);
        let fits = if horizontal { cols >= 4 } else { rows >= 4 };
        if fits {
            let (a, b) = if horizontal {
                let r = rng.gen_range(1..=rows);
                let c = rng.gen_range(1..=cols - 3);
                (Loc::new(r, c), Loc::new(r, c + 3))
            } else {
                let r = rng.gen_range(1..=rows - 3);
                let c = rng.gen_range(1..=cols);
                (Loc::new(r, c), Loc::new(r + 3, c))
            };
            let sc = Scenario { rows, cols, occupied: BTreeSet::new(), mixer: Some((a, b, horizontal)), reservoir };
            for l in sc.strip() {
                occupied.remove(&l);
            }
            occupied.insert(a);
            occupied.insert(b);
            mixer = Some((a, b, horizontal));
        }
    }
    Scenario { rows, cols, occupied, mixer, reservoir }
}

/// Checks every constraint on one random scenario; returns the number of
/// verdicts compared or a description of the first disagreement.
pub fn oracle_round(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let sc = random_scenario(rng);
    let s = sc.to_state();
    let mut n = 0;
    let cells: Vec<Loc> =
        (1..=sc.rows).flat_map(|r| (1..=sc.cols).map(move |c| Loc::new(r, c))).collect();
    let fail = |what: String| Err(format!("{what} on {sc:?}"));

    for &l in &sc.occupied {
        n += 1;
        if static_fc(&s, l) != sc.eval(&sc.static_formula(l)) {
            return fail(format!("static_fc {l}"));
        }
    }
    for &l in &cells {
        n += 1;
        if check_dispense(&s, l).is_ok() != sc.eval(&sc.dispense_formula(l)) {
            return fail(format!("dispense {l}"));
        }
    }
    for &src in &cells {
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let Some(dst) = sc.inside(src.row as i64 + dr, src.col as i64 + dc) else { continue };
            n += 1;
            if check_move(&s, src, dst, &[src]).is_ok() != sc.eval(&sc.move_formula(src, dst)) {
                return fail(format!("move {src}->{dst}"));
            }
        }
    }
    for &a in &cells {
        for (h, mtype, dr, dc) in [(true, MixerType::H14, 0, 3), (false, MixerType::V41, 3, 0)] {
            let Some(b) = sc.inside(a.row as i64 + dr, a.col as i64 + dc) else { continue };
            n += 1;
            if check_mix_start(&s, a, b, 2, mtype).is_ok() != sc.eval(&sc.mix_formula(a, b, h)) {
                return fail(format!("mix {a}-{b}"));
            }
        }
    }
    n += 1;
    if active_mixer_guard(&s).is_empty() != sc.eval(&sc.guard_formula()) {
        return fail("mixer guard".into());
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Program fuzzing.

fn header(rows: u32, cols: u32) -> ChipHeader {
    let decl = |r, c, kind| ReservoirDecl { loc: Loc::new(r, c), kind };
    ChipHeader {
        rows,
        cols,
        accuracy: 4,
        reservoirs: vec![
            decl(1, 1, ReservoirKind::Reagent("A".into())),
            decl(1, cols, ReservoirKind::Reagent("B".into())),
            decl(rows, 1, ReservoirKind::Waste),
            decl(rows, cols, ReservoirKind::Output),
        ],
    }
}

fn candidates(s: &ChipState, rng: &mut ChaCha8Rng) -> Vec<Instruction> {
    let dims = s.dims();
    let mut out = Vec::new();
    for (loc, kind) in &s.reservoirs {
        match kind {
            ReservoirKind::Reagent(_) => out.push(Instruction::Dispense(*loc)),
            ReservoirKind::Waste if s.grid.get(*loc) => out.push(Instruction::Waste(*loc)),
            ReservoirKind::Output if s.grid.get(*loc) => out.push(Instruction::Output(*loc)),
            _ => {}
        }
    }
    let free: Vec<Loc> = s.droplets().map(|d| d.loc).filter(|&l| s.mixer_holding(l).is_none()).collect();
    for &src in &free {
        for dst in dims.neighbors4(src) {
            out.push(Instruction::Move { src, dst });
        }
        for (dr, dc, mtype) in [(0, 3, MixerType::H14), (3, 0, MixerType::V41)] {
            if let Some(b) = src.offset(dr, dc).filter(|&b| free.contains(&b)) {
                out.push(Instruction::MixStart { a: src, b, t_mix: rng.gen_range(1..=4), mtype });
            }
        }
    }
    // Occasional stray instruction to exercise rejections.
    if rng.gen_bool(0.1) {
        let l = Loc::new(rng.gen_range(1..=dims.rows), rng.gen_range(1..=dims.cols));
        out.push(match rng.gen_range(0..3) {
            0 => Instruction::Dispense(l),
            1 => Instruction::Waste(l),
            _ => Instruction::Move { src: l, dst: dims.neighbors4(l)[0] },
        });
    }
    out
}

/// A random program built by stepping the chip and preferring lines the
/// chip accepts, so runs get long; some violating lines are kept.
pub fn random_program(rng: &mut ChaCha8Rng) -> Program {
    let rows = rng.gen_range(4..=8);
    let cols = rng.gen_range(4..=8);
    let header = header(rows, cols);
    let mut state = ChipState::new(&header);
    let mut main = Vec::new();
    let mut t = 0;
    let len = rng.gen_range(3..=30);
    while main.len() < len {
        t += rng.gen_range(1..=2);
        let mut line = None;
        for _ in 0..8 {
            let mut pool = candidates(&state.clone(), rng);
            if pool.is_empty() {
                break;
            }
            pool.shuffle(rng);
            let k = rng.gen_range(1..=3.min(pool.len()));
            let instrs: Vec<Instruction> = pool.into_iter().take(k).collect();
            let cand = TimedLine::new(t, instrs);
            let out = step(&state, &cand, &[]);
            if out.violations.is_empty() || rng.gen_bool(0.05) {
                state = out.next;
                line = Some(cand);
                break;
            }
        }
        match line {
            Some(l) => main.push(l),
            None => break,
        }
    }
    main.push(TimedLine::new(t + 1, vec![Instruction::End]));
    Program { header, main, detectors: Vec::new(), recoveries: BTreeMap::new(), t_max: None }
}

/// Ticks accepted without violation.
pub fn accepted_ticks(trace: &Trace) -> usize {
    trace.ticks.iter().take_while(|r| trace.halted_at.is_none_or(|h| r.t < h)).count()
}

/// Pairwise separation on every accepted tick, endpoints of one mixer aside.
pub fn separation_holds(trace: &Trace) -> Result<(), String> {
    for r in trace.ticks.iter().take(accepted_ticks(trace)) {
        let locs: Vec<Loc> = r.state.droplets().map(|d| d.loc).collect();
        for (i, &p) in locs.iter().enumerate() {
            for &q in &locs[i + 1..] {
                let near = p.row.abs_diff(q.row) <= 1 && p.col.abs_diff(q.col) <= 1;
                let paired = r.state.mixers.iter().any(|m| (m.a == p && m.b == q) || (m.a == q && m.b == p));
                if near && !paired {
                    return Err(format!("t={}: {p} and {q} touch", r.t));
                }
            }
        }
    }
    Ok(())
}

/// Droplet count changes only by dispenses and removals, and the grid
/// agrees with the registry.
pub fn occupancy_conserved(trace: &Trace) -> Result<(), String> {
    let mut count = trace.initial.droplet_count();
    for r in trace.ticks.iter().take(accepted_ticks(trace)) {
        for e in &r.events {
            match e {
                Event::Dispensed { .. } => count += 1,
                Event::Removed { sink: Sink::Waste | Sink::Output, .. } => count -= 1,
                _ => {}
            }
        }
        if r.state.droplet_count() != count || !r.state.consistent() {
            return Err(format!("t={}: {} droplets, expected {count}", r.t, r.state.droplet_count()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random sequencing graphs and a brute-force matcher.

pub fn random_graph(rng: &mut ChaCha8Rng) -> SeqGraph {
    let n_reagents = rng.gen_range(2..=3);
    let reagents: Vec<String> = (0..n_reagents).map(|i| format!("R{i}")).collect();
    let mut g = SeqGraph::new(reagents.clone());
    for r in &reagents {
        g.add_node(SgNode::new(format!("s{r}"), NodeKind::Source(r.clone())));
    }
    let mixes = rng.gen_range(1..=3);
    for m in 0..mixes {
        let open: Vec<usize> = (0..g.nodes.len())
            .filter(|&v| match g.nodes[v].kind {
                NodeKind::Source(_) => true,
                NodeKind::Mix => g.succs(v).len() < 2,
                _ => false,
            })
            .collect();
        let picks: Vec<usize> = open.choose_multiple(rng, 2).copied().collect();
        let v = g.add_node(SgNode::new(format!("m{m}"), NodeKind::Mix));
        g.add_edge(picks[0], v);
        g.add_edge(picks[1], v);
    }
    let mixes: Vec<usize> = (0..g.nodes.len()).filter(|&v| g.nodes[v].kind == NodeKind::Mix).collect();
    for (i, v) in mixes.into_iter().enumerate() {
        let outs = g.succs(v).len();
        if outs == 0 {
            let o = g.add_node(SgNode::new(format!("o{i}"), NodeKind::Output));
            g.add_edge(v, o);
        } else if outs == 1 && rng.gen_bool(0.5) {
            let w = g.add_node(SgNode::new(format!("w{i}"), NodeKind::Waste));
            g.add_edge(v, w);
        }
    }
    g.propagate_cf().unwrap();
    g
}

/// Same graph with nodes shuffled and renamed.
pub fn relabeled(g: &SeqGraph, rng: &mut ChaCha8Rng) -> SeqGraph {
    let mut perm: Vec<usize> = (0..g.nodes.len()).collect();
    perm.shuffle(rng);
    let mut h = SeqGraph::new(g.reagents.clone());
    let mut pos = vec![0; g.nodes.len()];
    for (new, &old) in perm.iter().enumerate() {
        let mut n = g.nodes[old].clone();
        n.id = format!("x{new}");
        h.add_node(n);
        pos[old] = new;
    }
    let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|&(a, b)| (pos[a], pos[b])).collect();
    edges.shuffle(rng);
    for (a, b) in edges {
        h.add_edge(a, b);
    }
    h
}

/// A small random edit: rewire one mix input to another source, or drop a
/// terminal node.
pub fn mutated(g: &SeqGraph, rng: &mut ChaCha8Rng) -> SeqGraph {
    let mut h = g.clone();
    if rng.gen_bool(0.5) {
        let into_mix: Vec<usize> = (0..h.edges.len())
            .filter(|&i| matches!(h.nodes[h.edges[i].0].kind, NodeKind::Source(_)))
            .collect();
        if let Some(&i) = into_mix.choose(rng) {
            let sources: Vec<usize> =
                (0..h.nodes.len()).filter(|&v| matches!(h.nodes[v].kind, NodeKind::Source(_))).collect();
            h.edges[i].0 = *sources.choose(rng).unwrap();
        }
    } else {
        let terminals: Vec<usize> = (0..h.nodes.len())
            .filter(|&v| matches!(h.nodes[v].kind, NodeKind::Output | NodeKind::Waste))
            .collect();
        if let Some(&v) = terminals.choose(rng) {
            h.nodes.remove(v);
            h.edges.retain(|&(a, b)| a != v && b != v);
            for e in &mut h.edges {
                if e.0 > v {
                    e.0 -= 1;
                }
                if e.1 > v {
                    e.1 -= 1;
                }
            }
        }
    }
    h.propagate_cf().unwrap();
    h
}

fn depth(g: &SeqGraph, v: usize) -> usize {
    g.edges.iter().filter(|e| e.1 == v).map(|e| depth(g, e.0) + 1).max().unwrap_or(0)
}

fn key(g: &SeqGraph, v: usize, accuracy: u32) -> (usize, String, Option<Vec<u128>>) {
    let kind = match &g.nodes[v].kind {
        NodeKind::Source(r) => format!("source {r}"),
        other => format!("{other:?}"),
    };
    (depth(g, v), kind, g.nodes[v].cf.as_ref().map(|c| c.rounded_numerators(accuracy)))
}

/// Whether some bijection of nodes preserves depth, kind, reagent and
/// rounded vector. Tries every assignment.
pub fn brute_force_match(g: &SeqGraph, h: &SeqGraph, accuracy: u32) -> bool {
    if g.nodes.len() != h.nodes.len() {
        return false;
    }
    let kg: Vec<_> = (0..g.nodes.len()).map(|v| key(g, v, accuracy)).collect();
    let kh: Vec<_> = (0..h.nodes.len()).map(|v| key(h, v, accuracy)).collect();
    fn assign(i: usize, kg: &[(usize, String, Option<Vec<u128>>)], kh: &[(usize, String, Option<Vec<u128>>)], used: &mut Vec<bool>) -> bool {
        if i == kg.len() {
            return true;
        }
        for j in 0..kh.len() {
            if !used[j] && kg[i] == kh[j] {
                used[j] = true;
                if assign(i + 1, kg, kh, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    assign(0, &kg, &kh, &mut vec![false; kh.len()])
}

// ---------------------------------------------------------------------------
// Random dyadic mix trees.

/// Folds random pairs of a pool of unit vectors until one remains.
pub fn random_mix_tree(rng: &mut ChaCha8Rng) -> Vec<dmfv::graph::CfVector> {
    let n = rng.gen_range(1..=6);
    let mut pool: Vec<_> = (0..rng.gen_range(2..=10)).map(|_| dmfv::graph::CfVector::unit(n, rng.gen_range(0..n))).collect();
    let mut seen = Vec::new();
    while pool.len() > 1 {
        let i = rng.gen_range(0..pool.len());
        let a = pool.swap_remove(i);
        let j = rng.gen_range(0..pool.len());
        let b = pool.swap_remove(j);
        let m = dmfv::graph::cf_mix(&a, &b).unwrap();
        seen.push(m.clone());
        pool.push(m.clone());
        if rng.gen_bool(0.5) {
            // Both halves of the split stay available.
            pool.push(m);
        }
        if pool.len() > 12 {
            pool.truncate(12);
        }
        if seen.len() > 40 {
            break;
        }
    }
    seen
}

// ---------------------------------------------------------------------------
// Small pin maps with hand-placed shared pins.

/// Unlisted cells get unique pins from `fresh` upward.
pub fn sparse_map(rows: u32, cols: u32, fixed: &[((u32, u32), u32)], fresh: u32) -> PinMap {
    let mut next = fresh;
    let mut pins = Vec::new();
    for r in 1..=rows {
        for c in 1..=cols {
            match fixed.iter().find(|(rc, _)| *rc == (r, c)) {
                Some((_, p)) => pins.push(*p),
                None => {
                    pins.push(next);
                    next += 1;
                }
            }
        }
    }
    PinMap::new(rows, cols, pins).unwrap()
}

pub fn pair_map(tail: u32) -> PinMap {
    sparse_map(
        6,
        6,
        &[
            ((2, 2), 3),
            ((2, 3), 4),
            ((4, 4), 1),
            ((4, 5), 8),
            ((5, 3), 4),
            ((5, 4), 6),
            ((5, 5), 7),
            ((5, 6), tail),
            ((6, 4), 2),
            ((6, 5), 9),
        ],
        100,
    )
}

pub fn dispense_map() -> PinMap {
    PinMap::parse("7 3 6 5\n4 8 2 9\n2 5 1 3\n6 3 4 2\n5 6 4 1\n").unwrap()
}

pub fn route_map() -> PinMap {
    sparse_map(
        5,
        4,
        &[
            ((1, 1), 10),
            ((1, 2), 9),
            ((1, 3), 4),
            ((1, 4), 5),
            ((2, 1), 1),
            ((2, 2), 7),
            ((2, 3), 2),
            ((2, 4), 3),
            ((3, 1), 5),
            ((4, 1), 6),
            ((4, 2), 8),
            ((5, 1), 7),
            ((5, 4), 11),
            ((4, 4), 12),
            ((5, 3), 13),
        ],
        14,
    )
}
