//! Symbolic chip state: occupancy grid, reservoir table, active-mixer table
//! and the droplet registry.
//!
//! The registry is keyed by location, which makes "distinct droplets have
//! distinct locations" structural. Droplets taking part in an active mix stay
//! registered at the mixer endpoints; the mixer entry pins them there.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::graph::cf::{cf_mix, CfVector};
use crate::isa::{ChipHeader, Loc, MixerType, ReservoirKind};

/// Lineage identifier. Reagent `k` (declaration order, 1-based) dispenses
/// droplets with id `k`; every completed mix mints a fresh id shared by its
/// two output droplets.
pub type DropletId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChipError {
    #[error("{0} is outside the chip")]
    OutOfBounds(Loc),
    #[error("{0} claimed twice at t={1}")]
    DoubleClaim(Loc, u32),
    #[error("no droplet on {0}")]
    NotOccupied(Loc),
}

/// Grid dimensions and neighborhood arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub rows: u32,
    pub cols: u32,
}

impl Dims {
    pub fn in_bounds(self, loc: Loc) -> bool {
        (1..=self.rows).contains(&loc.row) && (1..=self.cols).contains(&loc.col)
    }

    fn around(self, loc: Loc, deltas: &[(i64, i64)]) -> Vec<Loc> {
        deltas
            .iter()
            .filter_map(|&(dr, dc)| loc.offset(dr, dc))
            .filter(|&l| self.in_bounds(l))
            .collect()
    }

    /// Up, down, left, right; truncated at the border.
    pub fn neighbors4(self, loc: Loc) -> Vec<Loc> {
        self.around(loc, &[(-1, 0), (1, 0), (0, -1), (0, 1)])
    }

    /// The 8 surrounding cells, row-major; truncated at the border.
    pub fn neighbors8(self, loc: Loc) -> Vec<Loc> {
        self.around(
            loc,
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        )
    }

    /// Every cell, row-major.
    pub fn cells(self) -> impl Iterator<Item = Loc> {
        (1..=self.rows).flat_map(move |r| (1..=self.cols).map(move |c| Loc::new(r, c)))
    }

    fn index(self, loc: Loc) -> usize {
        ((loc.row - 1) * self.cols + (loc.col - 1)) as usize
    }
}

/// The `x_{i,j}` variables at one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    pub dims: Dims,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(dims: Dims) -> Self {
        OccupancyGrid { dims, cells: vec![false; (dims.rows * dims.cols) as usize] }
    }

    /// `false` outside the chip: walls never hold droplets.
    pub fn get(&self, loc: Loc) -> bool {
        self.dims.in_bounds(loc) && self.cells[self.dims.index(loc)]
    }

    fn set(&mut self, loc: Loc, v: bool) {
        let i = self.dims.index(loc);
        self.cells[i] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Droplet {
    pub id: DropletId,
    pub loc: Loc,
    pub cf: CfVector,
    pub born_at: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MixerEntry {
    pub a: Loc,
    pub b: Loc,
    pub t_s: u32,
    /// First tick at which the output droplets exist.
    pub t_e: u32,
    pub mtype: MixerType,
    pub input_ids: (DropletId, DropletId),
}

impl MixerEntry {
    pub fn span(&self) -> Vec<Loc> {
        self.mtype.span(self.a, self.b)
    }

    pub fn holds(&self, loc: Loc) -> bool {
        loc == self.a || loc == self.b
    }
}

/// A droplet held on a detector cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub detector: String,
    pub loc: Loc,
    pub t_s: u32,
    /// First tick at which the droplet is free again.
    pub t_e: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MixCompleted {
    pub inputs: (DropletId, DropletId),
    pub output: DropletId,
    pub a: Loc,
    pub b: Loc,
    pub t_s: u32,
    pub t_e: u32,
    pub cf: CfVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipState {
    pub t: u32,
    pub grid: OccupancyGrid,
    pub reservoirs: BTreeMap<Loc, ReservoirKind>,
    pub reagents: Vec<String>,
    pub mixers: Vec<MixerEntry>,
    pub detections: Vec<Detection>,
    droplets: BTreeMap<Loc, Droplet>,
    pending: BTreeSet<Loc>,
    next_id: DropletId,
}

impl ChipState {
    pub fn new(header: &ChipHeader) -> Self {
        let dims = Dims { rows: header.rows, cols: header.cols };
        let reagents = header.reagents();
        ChipState {
            t: 0,
            grid: OccupancyGrid::new(dims),
            reservoirs: header.reservoirs.iter().map(|r| (r.loc, r.kind.clone())).collect(),
            next_id: reagents.len() as DropletId + 1,
            reagents,
            mixers: Vec::new(),
            detections: Vec::new(),
            droplets: BTreeMap::new(),
            pending: BTreeSet::new(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims
    }

    pub fn occupied(&self, loc: Loc) -> Result<bool, ChipError> {
        if self.dims().in_bounds(loc) {
            Ok(self.grid.get(loc))
        } else {
            Err(ChipError::OutOfBounds(loc))
        }
    }

    pub fn neighbors4(&self, loc: Loc) -> Result<Vec<Loc>, ChipError> {
        self.occupied(loc)?;
        Ok(self.dims().neighbors4(loc))
    }

    pub fn neighbors8(&self, loc: Loc) -> Result<Vec<Loc>, ChipError> {
        self.occupied(loc)?;
        Ok(self.dims().neighbors8(loc))
    }

    pub fn droplet(&self, loc: Loc) -> Option<&Droplet> {
        self.droplets.get(&loc)
    }

    /// Droplets in row-major location order.
    pub fn droplets(&self) -> impl Iterator<Item = &Droplet> {
        self.droplets.values()
    }

    pub fn droplet_count(&self) -> usize {
        self.droplets.len()
    }

    pub fn is_pending(&self, loc: Loc) -> bool {
        self.pending.contains(&loc)
    }

    pub fn pending(&self) -> impl Iterator<Item = Loc> + '_ {
        self.pending.iter().copied()
    }

    /// Reagent index (0-based) dispensed at `loc`, if it is a reagent reservoir.
    pub fn reagent_at(&self, loc: Loc) -> Option<usize> {
        match self.reservoirs.get(&loc)? {
            ReservoirKind::Reagent(name) => self.reagents.iter().position(|r| r == name),
            _ => None,
        }
    }

    /// A fresh droplet of pure reagent `k`.
    pub fn reagent_droplet(&self, k: usize, loc: Loc) -> Droplet {
        Droplet {
            id: k as DropletId + 1,
            loc,
            cf: CfVector::unit(self.reagents.len(), k),
            born_at: self.t,
        }
    }

    pub fn mixer_holding(&self, loc: Loc) -> Option<&MixerEntry> {
        self.mixers.iter().find(|m| m.holds(loc))
    }

    pub fn detection_at(&self, loc: Loc) -> Option<&Detection> {
        self.detections.iter().find(|d| d.loc == loc)
    }

    /// Registers `droplet` at `loc` for the current tick.
    pub fn claim(&mut self, loc: Loc, mut droplet: Droplet) -> Result<(), ChipError> {
        if !self.dims().in_bounds(loc) {
            return Err(ChipError::OutOfBounds(loc));
        }
        if !self.pending.insert(loc) {
            return Err(ChipError::DoubleClaim(loc, self.t));
        }
        droplet.loc = loc;
        self.grid.set(loc, true);
        self.droplets.insert(loc, droplet);
        Ok(())
    }

    /// Removes and returns the droplet on `loc`.
    pub fn release(&mut self, loc: Loc) -> Result<Droplet, ChipError> {
        let d = self.droplets.remove(&loc).ok_or(ChipError::NotOccupied(loc))?;
        self.grid.set(loc, false);
        self.pending.remove(&loc);
        Ok(d)
    }

    /// Advances the clock and forgets intra-tick claims.
    pub fn begin_tick(&mut self, t: u32) {
        self.t = t;
        self.pending.clear();
        self.detections.retain(|d| d.t_e > t);
    }

    pub fn start_mixer(&mut self, a: Loc, b: Loc, t_mix: u32, mtype: MixerType) {
        let ia = self.droplets.get(&a).map_or(0, |d| d.id);
        let ib = self.droplets.get(&b).map_or(0, |d| d.id);
        self.mixers.push(MixerEntry {
            a,
            b,
            t_s: self.t,
            t_e: self.t + t_mix + 1,
            mtype,
            input_ids: (ia, ib),
        });
    }

    pub fn start_detection(&mut self, detector: &str, loc: Loc, duration: u32) {
        self.detections.push(Detection {
            detector: detector.to_string(),
            loc,
            t_s: self.t,
            t_e: self.t + duration,
        });
    }

    /// Completes every mixer due by `t`. Both endpoint droplets take a fresh
    /// shared id and the averaged concentration vector. Idempotent for a
    /// given `t`.
    pub fn expire_mixers(&mut self, t: u32) -> Vec<MixCompleted> {
        let (due, live): (Vec<_>, Vec<_>) = self.mixers.drain(..).partition(|m| m.t_e <= t);
        self.mixers = live;
        let mut events = Vec::new();
        for m in due {
            let cf = match (self.droplets.get(&m.a), self.droplets.get(&m.b)) {
                (Some(x), Some(y)) => cf_mix(&x.cf, &y.cf).expect("one reagent universe per chip"),
                _ => continue,
            };
            let id = self.next_id;
            self.next_id += 1;
            for loc in [m.a, m.b] {
                if let Some(d) = self.droplets.get_mut(&loc) {
                    d.id = id;
                    d.cf = cf.clone();
                    d.born_at = m.t_e;
                }
            }
            events.push(MixCompleted {
                inputs: m.input_ids,
                output: id,
                a: m.a,
                b: m.b,
                t_s: m.t_s,
                t_e: m.t_e,
                cf,
            });
        }
        events
    }

    /// Grid glyphs: `D` droplet, `M` mixer cell without a droplet, reservoir
    /// letters `R`/`O`/`W` on empty access cells, `.` otherwise.
    pub fn snapshot(&self) -> Vec<Vec<char>> {
        let dims = self.dims();
        let mut rows = vec![vec!['.'; dims.cols as usize]; dims.rows as usize];
        let mut put = |loc: Loc, c: char| {
            rows[(loc.row - 1) as usize][(loc.col - 1) as usize] = c;
        };
        for (loc, kind) in &self.reservoirs {
            if dims.in_bounds(*loc) {
                let c = match kind {
                    ReservoirKind::Reagent(_) => 'R',
                    ReservoirKind::Output => 'O',
                    ReservoirKind::Waste => 'W',
                };
                put(*loc, c);
            }
        }
        for m in &self.mixers {
            for loc in m.span() {
                put(loc, 'M');
            }
        }
        for loc in self.droplets.keys() {
            put(*loc, 'D');
        }
        rows
    }

    /// Checks that grid occupancy and the registry agree exactly.
    pub fn consistent(&self) -> bool {
        self.grid.count() == self.droplets.len()
            && self.droplets.iter().all(|(loc, d)| d.loc == *loc && self.grid.get(*loc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{ReservoirDecl, ReservoirKind};

    fn header(rows: u32, cols: u32, res: &[(u32, u32, ReservoirKind)]) -> ChipHeader {
        ChipHeader {
            rows,
            cols,
            accuracy: 5,
            reservoirs: res
                .iter()
                .map(|(r, c, k)| ReservoirDecl { loc: Loc::new(*r, *c), kind: k.clone() })
                .collect(),
        }
    }

    fn fig3() -> ChipHeader {
        header(
            5,
            4,
            &[
                (1, 1, ReservoirKind::Reagent("S".into())),
                (1, 4, ReservoirKind::Reagent("B".into())),
                (5, 1, ReservoirKind::Output),
                (5, 4, ReservoirKind::Waste),
            ],
        )
    }

    #[test]
    fn init_fig3() {
        let s = ChipState::new(&fig3());
        assert_eq!(s.dims().cells().count(), 20);
        assert!(s.dims().cells().all(|l| !s.occupied(l).unwrap()));
        assert_eq!(s.reservoirs.len(), 4);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn init_single_cell() {
        let s = ChipState::new(&header(1, 1, &[(1, 1, ReservoirKind::Reagent("A".into()))]));
        assert_eq!(s.dims().cells().collect::<Vec<_>>(), vec![Loc::new(1, 1)]);
        assert!(!s.occupied(Loc::new(1, 1)).unwrap());
    }

    #[test]
    fn neighborhoods() {
        let s = ChipState::new(&fig3());
        let mut n8 = s.neighbors8(Loc::new(1, 1)).unwrap();
        n8.sort();
        assert_eq!(n8, vec![Loc::new(1, 2), Loc::new(2, 1), Loc::new(2, 2)]);
        let mut n4 = s.neighbors4(Loc::new(3, 3)).unwrap();
        n4.sort();
        assert_eq!(n4, vec![Loc::new(2, 3), Loc::new(3, 2), Loc::new(3, 4), Loc::new(4, 3)]);
        assert_eq!(s.neighbors4(Loc::new(6, 1)), Err(ChipError::OutOfBounds(Loc::new(6, 1))));
    }

    #[test]
    fn double_claim() {
        let mut s = ChipState::new(&fig3());
        let d = s.reagent_droplet(0, Loc::new(1, 1));
        s.claim(Loc::new(1, 1), d.clone()).unwrap();
        assert_eq!(s.claim(Loc::new(1, 1), d), Err(ChipError::DoubleClaim(Loc::new(1, 1), 0)));
    }

    #[test]
    fn claim_release_inverse() {
        let before = ChipState::new(&fig3());
        let mut s = before.clone();
        let d = s.reagent_droplet(1, Loc::new(1, 4));
        s.claim(Loc::new(1, 4), d).unwrap();
        s.release(Loc::new(1, 4)).unwrap();
        assert_eq!(s.grid, before.grid);
        assert!(s.consistent());
    }

    #[test]
    fn mixer_expiry_fig4() {
        let mut s = ChipState::new(&fig3());
        s.begin_tick(3);
        let (a, b) = (Loc::new(3, 1), Loc::new(3, 4));
        s.claim(a, s.reagent_droplet(0, a)).unwrap();
        s.claim(b, s.reagent_droplet(1, b)).unwrap();
        s.begin_tick(4);
        s.start_mixer(a, b, 12, MixerType::H14);
        assert_eq!((s.mixers[0].t_s, s.mixers[0].t_e), (4, 17));
        assert!(s.expire_mixers(16).is_empty());
        let ev = s.expire_mixers(17);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].t_s, ev[0].t_e, ev[0].inputs), (4, 17, (1, 2)));
        assert_eq!(ev[0].cf.rounded_numerators(5), vec![16, 16]);
        assert_eq!(s.droplet(a).unwrap().id, s.droplet(b).unwrap().id);
        assert!(s.expire_mixers(17).is_empty());
    }

    #[test]
    fn no_mixers_identity() {
        let mut s = ChipState::new(&fig3());
        let before = s.clone();
        assert!(s.expire_mixers(5).is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn snapshot_glyphs() {
        let mut s = ChipState::new(&fig3());
        let (a, b) = (Loc::new(3, 1), Loc::new(3, 4));
        s.claim(a, s.reagent_droplet(0, a)).unwrap();
        s.claim(b, s.reagent_droplet(1, b)).unwrap();
        s.start_mixer(a, b, 12, MixerType::H14);
        let g: Vec<String> = s.snapshot().into_iter().map(|r| r.into_iter().collect()).collect();
        assert_eq!(g, vec!["R..R", "....", "DMMD", "....", "O..W"]);
    }
}
