//! Rebuilds the realized sequencing graph from a trace.
//!
//! Every droplet id maps to the node that produced it: a reagent source on
//! dispense, a mix node on completion. Ids survive moves, so the lineage map
//! is only touched by dispense, mix and removal events.

use std::collections::HashMap;

use thiserror::Error;

use super::sg::{NodeKind, SeqGraph, SgNode};
use crate::chip::DropletId;
use crate::fluidics::{Event, Sink, Trace};
use crate::graph::cf::CfVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconstructError {
    #[error("event at t={t} refers to unknown droplet {id}")]
    OrphanDroplet { t: u32, id: DropletId },
}

/// Incremental builder fed one event at a time.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    graph: SeqGraph,
    lineage: HashMap<DropletId, usize>,
    sources: HashMap<usize, usize>,
    mixes: usize,
    wastes: usize,
    outputs: usize,
}

impl Reconstructor {
    pub fn new(reagents: Vec<String>) -> Self {
        Reconstructor {
            graph: SeqGraph::new(reagents),
            lineage: HashMap::new(),
            sources: HashMap::new(),
            mixes: 0,
            wastes: 0,
            outputs: 0,
        }
    }

    fn origin(&self, t: u32, id: DropletId) -> Result<usize, ReconstructError> {
        self.lineage.get(&id).copied().ok_or(ReconstructError::OrphanDroplet { t, id })
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), ReconstructError> {
        let g = &mut self.graph;
        match event {
            Event::Dispensed { id, reagent, .. } => {
                let name = g.reagents[*reagent].clone();
                let len = g.reagents.len();
                let v = *self.sources.entry(*reagent).or_insert_with(|| {
                    let mut node = SgNode::new(name.clone(), NodeKind::Source(name));
                    node.cf = Some(CfVector::unit(len, *reagent));
                    g.add_node(node)
                });
                self.lineage.insert(*id, v);
            }
            Event::MixCompleted(m) => {
                let a = self.origin(m.t_e, m.inputs.0)?;
                let b = self.origin(m.t_e, m.inputs.1)?;
                self.mixes += 1;
                let g = &mut self.graph;
                let mut node = SgNode::new(format!("v{}", self.mixes), NodeKind::Mix);
                node.cf = Some(m.cf.clone());
                node.t_s = Some(m.t_s);
                node.t_e = Some(m.t_e);
                let v = g.add_node(node);
                g.add_edge(a, v);
                g.add_edge(b, v);
                self.lineage.insert(m.output, v);
            }
            Event::Removed { t, id, cf, sink, .. } => {
                let from = self.origin(*t, *id)?;
                let (id, kind) = match sink {
                    Sink::Waste => {
                        self.wastes += 1;
                        (format!("W{}", self.wastes), NodeKind::Waste)
                    }
                    Sink::Output => {
                        self.outputs += 1;
                        (format!("O{}", self.outputs), NodeKind::Output)
                    }
                };
                let g = &mut self.graph;
                let mut node = SgNode::new(id, kind);
                node.cf = Some(cf.clone());
                let v = g.add_node(node);
                g.add_edge(from, v);
            }
            Event::MixStarted { .. } | Event::DetectStarted { .. } => {}
        }
        Ok(())
    }

    /// Graph built so far.
    pub fn graph(&self) -> &SeqGraph {
        &self.graph
    }

    pub fn finish(self) -> SeqGraph {
        self.graph
    }
}

/// Graph realized by a whole trace.
pub fn reconstruct(trace: &Trace) -> Result<SeqGraph, ReconstructError> {
    let mut r = Reconstructor::new(trace.initial.reagents.clone());
    for e in trace.events() {
        r.apply(e)?;
    }
    Ok(r.finish())
}

/// Graph snapshots after each tick, for step-by-step display.
pub fn reconstruct_incremental(trace: &Trace) -> Result<Vec<(u32, SeqGraph)>, ReconstructError> {
    let mut r = Reconstructor::new(trace.initial.reagents.clone());
    let mut out = Vec::new();
    for tick in &trace.ticks {
        for e in &tick.events {
            r.apply(e)?;
        }
        out.push((tick.t, r.graph().clone()));
    }
    Ok(out)
}
