//! Sequencing graphs and the `.sg` text format.
//!
//! ```text
//! reagents S B
//! node s dispense S
//! node b dispense B
//! node v1 mix 12 window 4 17
//! node w waste
//! edge s v1
//! edge b v1
//! edge v1 w
//! ```
//!
//! Dispense nodes of one reagent are merged into a single source node.
//! Edges carry multiplicity: a mix of two droplets from the same node lists
//! the edge twice.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use thiserror::Error;

use super::cf::{cf_mix, CfVector};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Source(String),
    Mix,
    Output,
    Waste,
    Start,
    End,
}

impl NodeKind {
    fn tag(&self) -> &'static str {
        match self {
            NodeKind::Source(_) => "dispense",
            NodeKind::Mix => "mix",
            NodeKind::Output => "output",
            NodeKind::Waste => "waste",
            NodeKind::Start => "start",
            NodeKind::End => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SgNode {
    pub id: String,
    pub kind: NodeKind,
    pub cf: Option<CfVector>,
    /// Required mixing duration (input graphs).
    pub t_mix: Option<u32>,
    /// Mixing window (reconstructed graphs).
    pub t_s: Option<u32>,
    pub t_e: Option<u32>,
}

impl SgNode {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        SgNode { id: id.into(), kind, cf: None, t_mix: None, t_s: None, t_e: None }
    }

    /// Realized mixing duration, `t_e - t_s - 1`.
    pub fn duration(&self) -> Option<u32> {
        Some(self.t_e?.checked_sub(self.t_s?)?.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SgError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("cycle through node `{0}`")]
    CycleDetected(String),
    #[error("node `{node}` has {found} {dir}-edges, expected {expected}")]
    BadArity { node: String, dir: &'static str, found: usize, expected: String },
}

/// A labeled DAG with edge multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeqGraph {
    /// Component order of every concentration vector in the graph.
    pub reagents: Vec<String>,
    pub nodes: Vec<SgNode>,
    pub edges: Vec<(usize, usize)>,
}

impl SeqGraph {
    pub fn new(reagents: Vec<String>) -> Self {
        SeqGraph { reagents, nodes: Vec::new(), edges: Vec::new() }
    }

    pub fn add_node(&mut self, node: SgNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        self.edges.push((from, to));
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Predecessors with multiplicity, in edge order.
    pub fn preds(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    pub fn succs(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == v).map(|e| e.1).collect()
    }

    pub fn count(&self, pred: impl Fn(&NodeKind) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.kind)).count()
    }

    /// Kahn order; `Err` names a node on a cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>, SgError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &(a, b) in &self.edges {
                if a == v {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        if order.len() < n {
            let v = (0..n).find(|&v| indeg[v] > 0).expect("some node left");
            return Err(SgError::CycleDetected(self.nodes[v].id.clone()));
        }
        Ok(order)
    }

    /// Checks acyclicity and per-kind degrees: sources have no inputs, mixes
    /// two inputs and at most two outputs, terminals one input and no outputs.
    pub fn validate(&self) -> Result<(), SgError> {
        self.topo_order()?;
        for (v, node) in self.nodes.iter().enumerate() {
            let (i, o) = (self.preds(v).len(), self.succs(v).len());
            let bad = |dir, found, expected: &str| SgError::BadArity {
                node: node.id.clone(),
                dir,
                found,
                expected: expected.to_string(),
            };
            match node.kind {
                NodeKind::Source(_) | NodeKind::Start if i != 0 => return Err(bad("in", i, "0")),
                NodeKind::Mix if i != 2 => return Err(bad("in", i, "2")),
                NodeKind::Mix if o > 2 => return Err(bad("out", o, "at most 2")),
                NodeKind::Output | NodeKind::Waste if i != 1 => return Err(bad("in", i, "1")),
                NodeKind::Output | NodeKind::Waste | NodeKind::End if o != 0 => {
                    return Err(bad("out", o, "0"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fills in every node's concentration vector from its inputs.
    pub fn propagate_cf(&mut self) -> Result<(), SgError> {
        let order = self.topo_order()?;
        let len = self.reagents.len();
        for v in order {
            let preds = self.preds(v);
            let cf = match &self.nodes[v].kind {
                NodeKind::Source(r) => {
                    let k = self.reagents.iter().position(|x| x == r).expect("validated reagent");
                    Some(CfVector::unit(len, k))
                }
                NodeKind::Mix => match (preds.first(), preds.get(1)) {
                    (Some(&a), Some(&b)) => match (&self.nodes[a].cf, &self.nodes[b].cf) {
                        (Some(x), Some(y)) => cf_mix(x, y).ok(),
                        _ => None,
                    },
                    _ => None,
                },
                NodeKind::Output | NodeKind::Waste => preds.first().and_then(|&a| self.nodes[a].cf.clone()),
                NodeKind::Start | NodeKind::End => None,
            };
            self.nodes[v].cf = cf;
        }
        Ok(())
    }

    /// Copy with a Start node feeding every input-free node and an End node
    /// fed by every output-free node.
    pub fn with_terminals(&self) -> SeqGraph {
        let mut g = self.clone();
        let n = g.nodes.len();
        let sources: Vec<usize> = (0..n).filter(|&v| g.preds(v).is_empty()).collect();
        let sinks: Vec<usize> = (0..n).filter(|&v| g.succs(v).is_empty()).collect();
        let s = g.add_node(SgNode::new("start", NodeKind::Start));
        let e = g.add_node(SgNode::new("end", NodeKind::End));
        for v in sources {
            g.add_edge(s, v);
        }
        for v in sinks {
            g.add_edge(v, e);
        }
        g
    }

    /// Longest-path depth of each node; input-free nodes sit at level 0.
    pub fn levels(&self) -> Result<Vec<usize>, SgError> {
        let mut level = vec![0usize; self.nodes.len()];
        for v in self.topo_order()? {
            for &(a, b) in &self.edges {
                if a == v {
                    level[b] = level[b].max(level[v] + 1);
                }
            }
        }
        Ok(level)
    }

    /// `.sg` text; parsing it back yields an equal graph.
    pub fn to_sg(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "reagents {}", self.reagents.join(" "));
        for n in &self.nodes {
            let _ = write!(out, "node {} {}", n.id, n.kind.tag());
            match &n.kind {
                NodeKind::Source(r) => {
                    let _ = write!(out, " {r}");
                }
                NodeKind::Mix => {
                    if let Some(t) = n.t_mix {
                        let _ = write!(out, " {t}");
                    }
                    if let (Some(s), Some(e)) = (n.t_s, n.t_e) {
                        let _ = write!(out, " window {s} {e}");
                    }
                }
                _ => {}
            }
            out.push('\n');
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "edge {} {}", self.nodes[a].id, self.nodes[b].id);
        }
        out
    }

    /// DOT digraph labeled with ids, windows and vectors at `n` bits.
    pub fn to_dot(&self, n: u32) -> String {
        let mut out = String::from("digraph sg {\n  rankdir=TB;\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let mut label = match &node.kind {
                NodeKind::Source(r) => r.clone(),
                _ => node.id.clone(),
            };
            if let (Some(s), Some(e)) = (node.t_s, node.t_e) {
                let _ = write!(label, "\\n[{s},{e}]");
            } else if let Some(t) = node.t_mix {
                let _ = write!(label, "\\nt={t}");
            }
            if let (Some(cf), NodeKind::Mix | NodeKind::Output | NodeKind::Waste) = (&node.cf, &node.kind) {
                let _ = write!(label, "\\n{}", cf.fractions(n));
            }
            let shape = match node.kind {
                NodeKind::Mix => "ellipse",
                NodeKind::Source(_) => "box",
                _ => "doublecircle",
            };
            let _ = writeln!(out, "  n{i} [label=\"{label}\", shape={shape}];");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> SgError {
    SgError::Syntax { line, msg: msg.into() }
}

fn number(line: usize, tok: Option<&str>, what: &str) -> Result<u32, SgError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| syntax(line, format!("`{tok}` is not a valid {what}")))
}

/// Parses, merges same-reagent sources, validates and propagates vectors.
pub fn parse_sg(text: &str) -> Result<SeqGraph, SgError> {
    let mut declared: Option<Vec<String>> = None;
    let mut g = SeqGraph::default();
    // Node id to index; merged dispense ids alias one index.
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut source_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut used_reagents: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some(&head) = toks.first() else { continue };
        match head {
            "reagents" => {
                if declared.is_some() {
                    return Err(syntax(line, "duplicate reagents line"));
                }
                if toks.len() < 2 {
                    return Err(syntax(line, "reagents line lists no reagent"));
                }
                declared = Some(toks[1..].iter().map(|s| s.to_string()).collect());
            }
            "node" => {
                let id = *toks.get(1).ok_or_else(|| syntax(line, "missing node id"))?;
                if ids.contains_key(id) {
                    return Err(syntax(line, format!("duplicate node `{id}`")));
                }
                let kind = *toks.get(2).ok_or_else(|| syntax(line, "missing node kind"))?;
                let rest = &toks[3.min(toks.len())..];
                let idx = match kind {
                    "dispense" => {
                        let [r] = rest else { return Err(syntax(line, "dispense takes one reagent")) };
                        if let Some(list) = &declared {
                            if !list.iter().any(|x| x == r) {
                                return Err(syntax(line, format!("undeclared reagent `{r}`")));
                            }
                        }
                        if !used_reagents.iter().any(|x| x == r) {
                            used_reagents.push(r.to_string());
                        }
                        *source_of
                            .entry(r.to_string())
                            .or_insert_with(|| g.add_node(SgNode::new(id, NodeKind::Source(r.to_string()))))
                    }
                    "mix" => {
                        let mut node = SgNode::new(id, NodeKind::Mix);
                        let mut k = 0;
                        if let Some(t) = rest.first().filter(|t| **t != "window") {
                            let t_mix = number(line, Some(t), "mixing time")?;
                            if t_mix == 0 {
                                return Err(syntax(line, "mixing time must be positive"));
                            }
                            node.t_mix = Some(t_mix);
                            k = 1;
                        }
                        match &rest[k..] {
                            [] => {}
                            ["window", s, e] => {
                                let (s, e) = (number(line, Some(s), "tick")?, number(line, Some(e), "tick")?);
                                if s >= e {
                                    return Err(syntax(line, "window must satisfy start < end"));
                                }
                                node.t_s = Some(s);
                                node.t_e = Some(e);
                            }
                            _ => return Err(syntax(line, "expected `mix [t_mix] [window ts te]`")),
                        }
                        g.add_node(node)
                    }
                    "output" | "waste" if rest.is_empty() => g.add_node(SgNode::new(
                        id,
                        if kind == "output" { NodeKind::Output } else { NodeKind::Waste },
                    )),
                    "output" | "waste" => return Err(syntax(line, format!("`{kind}` takes no arguments"))),
                    other => return Err(syntax(line, format!("unknown node kind `{other}`"))),
                };
                ids.insert(id.to_string(), idx);
            }
            "edge" => {
                let [a, b] = toks[1..] else { return Err(syntax(line, "edge takes two node ids")) };
                let look = |x: &str| ids.get(x).copied().ok_or_else(|| syntax(line, format!("unknown node `{x}`")));
                let (a, b) = (look(a)?, look(b)?);
                g.add_edge(a, b);
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    g.reagents = declared.unwrap_or(used_reagents);
    g.validate()?;
    g.propagate_cf()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "\
reagents R1 R2 R3
node r1 dispense R1
node r2 dispense R2
node r3 dispense R3
node M1 mix 12
node M2 mix 12
node M3 mix 12
node o output
edge r1 M1
edge r2 M1
edge r2 M2
edge r3 M2
edge M1 M3
edge M2 M3
edge M3 o
";

    #[test]
    fn three_mix_ratio_graph() {
        let g = parse_sg(FIG2).unwrap();
        assert_eq!(g.nodes.len(), 7);
        let o = g.node_index("o").unwrap();
        assert_eq!(g.nodes[o].cf.as_ref().unwrap().ratio(5), "(1:2:1)");
        assert_eq!(parse_sg(&g.to_sg()).unwrap(), g);
    }

    #[test]
    fn single_dispense_to_output() {
        let g = parse_sg("node a dispense A\nnode o output\nedge a o\n").unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.reagents, vec!["A".to_string()]);
    }

    #[test]
    fn merges_same_reagent_dispenses() {
        let g = parse_sg("node a1 dispense A\nnode a2 dispense A\nnode m mix\nedge a1 m\nedge a2 m\n").unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.preds(1), vec![0, 0]);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(matches!(
            parse_sg("node a dispense A\nnode m mix\nedge a m\n"),
            Err(SgError::BadArity { .. })
        ));
        assert!(matches!(
            parse_sg("node a dispense A\nnode m mix\nnode n mix\nedge a m\nedge n m\nedge m n\nedge a n\n"),
            Err(SgError::CycleDetected(_))
        ));
        assert!(matches!(parse_sg("node a frobnicate\n"), Err(SgError::Syntax { line: 1, .. })));
        assert!(matches!(parse_sg("edge a b\n"), Err(SgError::Syntax { .. })));
        assert!(matches!(
            parse_sg("reagents A\nnode b dispense B\n"),
            Err(SgError::Syntax { .. })
        ));
    }

    #[test]
    fn windows_and_durations() {
        let g = parse_sg("node a dispense A\nnode b dispense B\nnode m mix 12 window 8 15\nedge a m\nedge b m\n").unwrap();
        let m = &g.nodes[g.node_index("m").unwrap()];
        assert_eq!(m.duration(), Some(6));
        assert_eq!(m.t_mix, Some(12));
    }

    #[test]
    fn levels_follow_longest_path() {
        let g = parse_sg(FIG2).unwrap().with_terminals();
        let lv = g.levels().unwrap();
        let at = |id: &str| lv[g.node_index(id).unwrap()];
        assert_eq!((at("start"), at("r1"), at("M1"), at("M3"), at("o"), at("end")), (0, 1, 2, 3, 4, 5));
    }
}
