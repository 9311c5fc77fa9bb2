//! Box coverings of a state-space window and transition graphs of sampled
//! one-step dynamics. Graph paths are controlled chains whose jump size is
//! the box diameter; recurrent components approximate chain control sets and
//! forward/backward intersections approximate control sets.
//!
//! Every result is relative to the window: transitions leaving it go to an
//! absorbing sink that closures never enter.

use std::io;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::graph::{Digraph, Direction};
use crate::system::{AffineSystem, ControlRange};

/// Default cap on the number of cells of a (refined) grid.
pub const DEFAULT_CELL_CAP: usize = 1 << 24;

/// Uniform box grid on `[lo, hi]`, optionally restricted to active boxes.
/// Index order is row-major with the first coordinate varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    subdivisions: Vec<usize>,
    active: Option<Arc<Vec<bool>>>,
}

impl BoxGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, subdivisions: Vec<usize>) -> Result<Self> {
        check_dim("window upper bounds", lo.len(), hi.len())?;
        check_dim("subdivision counts", lo.len(), subdivisions.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one dimension".into()));
        }
        for i in 0..lo.len() {
            if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::InvalidArgument(format!("window axis {i} needs finite lo < hi")));
            }
            if subdivisions[i] == 0 {
                return Err(Error::InvalidArgument(format!("axis {i} needs at least one subdivision")));
            }
        }
        Ok(Self {
            lo,
            hi,
            subdivisions,
            active: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn subdivisions(&self) -> &[usize] {
        &self.subdivisions
    }

    /// Number of box indices, active or not.
    pub fn len(&self) -> usize {
        self.subdivisions.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.active_count() == 0
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active.as_ref().is_none_or(|a| a[idx])
    }

    pub fn active_count(&self) -> usize {
        match &self.active {
            None => self.len(),
            Some(a) => a.iter().filter(|&&b| b).count(),
        }
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_active(i)).collect()
    }

    pub fn extent(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.hi[i] - self.lo[i]) / self.subdivisions[i] as f64)
            .collect()
    }

    /// Euclidean diameter of one box.
    pub fn box_diameter(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn box_volume(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Largest norm of a window corner.
    pub fn window_radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.subdivisions
            .iter()
            .map(|&s| {
                let k = idx % s;
                idx /= s;
                k
            })
            .collect()
    }

    pub fn index_of(&self, multi: &[usize]) -> Option<usize> {
        if multi.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        let mut stride = 1;
        for (k, &s) in multi.iter().zip(&self.subdivisions) {
            if *k >= s {
                return None;
            }
            idx += k * stride;
            stride *= s;
        }
        Some(idx)
    }

    /// Point of box `idx` at relative position `unit` in `[0,1]^n`.
    pub fn point_in(&self, idx: usize, unit: &[f64]) -> DVector<f64> {
        let ext = self.extent();
        let multi = self.multi_index(idx);
        DVector::from_fn(self.dim(), |i, _| self.lo[i] + (multi[i] as f64 + unit[i]) * ext[i])
    }

    pub fn center(&self, idx: usize) -> DVector<f64> {
        self.point_in(idx, &vec![0.5; self.dim()])
    }

    /// Box containing `x` (half-open boxes, the upper window face belongs to
    /// the last box); `None` outside the window or in an inactive box.
    pub fn locate(&self, x: &DVector<f64>) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut multi = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let v = x[i];
            if !(v >= self.lo[i] && v <= self.hi[i]) {
                return None;
            }
            let rel = (v - self.lo[i]) / (self.hi[i] - self.lo[i]) * self.subdivisions[i] as f64;
            multi.push((rel.floor() as usize).min(self.subdivisions[i] - 1));
        }
        let idx = self.index_of(&multi)?;
        self.is_active(idx).then_some(idx)
    }

    /// Boxes sharing at least a corner with `idx` (excluding `idx`).
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let multi = self.multi_index(idx);
        let d = self.dim();
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let mut cand = Vec::with_capacity(d);
            let mut ok = true;
            let mut center = true;
            for i in 0..d {
                let off = (c % 3) as isize - 1;
                c /= 3;
                center &= off == 0;
                let k = multi[i] as isize + off;
                if k < 0 || k >= self.subdivisions[i] as isize {
                    ok = false;
                    break;
                }
                cand.push(k as usize);
            }
            if ok && !center {
                out.push(self.index_of(&cand).expect("in range"));
            }
        }
        out
    }
}

/// Set of boxes of a grid, stored as sorted indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoxSet {
    universe: usize,
    members: Vec<usize>,
}

impl BoxSet {
    pub fn empty(universe: usize) -> Self {
        Self {
            universe,
            members: Vec::new(),
        }
    }

    pub fn from_indices(universe: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            if last >= universe {
                return Err(Error::InvalidArgument(format!(
                    "box index {last} outside grid of {universe} boxes"
                )));
            }
        }
        Ok(Self { universe, members })
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self {
            universe: mask.len(),
            members: mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.members.binary_search(&idx).is_ok()
    }

    pub fn indices(&self) -> &[usize] {
        &self.members
    }

    pub fn to_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.universe];
        for &i in &self.members {
            mask[i] = true;
        }
        mask
    }

    pub fn intersection(&self, other: &BoxSet) -> BoxSet {
        BoxSet {
            universe: self.universe,
            members: self.members.iter().copied().filter(|&i| other.contains(i)).collect(),
        }
    }

    pub fn union(&self, other: &BoxSet) -> BoxSet {
        let mut members: Vec<usize> = self.members.iter().chain(&other.members).copied().collect();
        members.sort_unstable();
        members.dedup();
        BoxSet {
            universe: self.universe.max(other.universe),
            members,
        }
    }

    pub fn is_subset(&self, other: &BoxSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    /// `(start, length)` runs of consecutive indices.
    pub fn run_lengths(&self) -> Vec<(usize, usize)> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &i in &self.members {
            match runs.last_mut() {
                Some((start, len)) if *start + *len == i => *len += 1,
                _ => runs.push((i, 1)),
            }
        }
        runs
    }

    pub fn from_run_lengths(universe: usize, runs: &[(usize, usize)]) -> Result<Self> {
        Self::from_indices(universe, runs.iter().flat_map(|&(s, l)| s..s + l).collect())
    }

    /// CSV rows `i_0..,c_0..,e_0..` (multi-index, center, extents).
    pub fn write_csv<W: io::Write>(&self, grid: &BoxGrid, mut w: W) -> io::Result<()> {
        let d = grid.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("i{i}")).collect();
        header.extend((0..d).map(|i| format!("c{i}")));
        header.extend((0..d).map(|i| format!("e{i}")));
        writeln!(w, "{}", header.join(","))?;
        let ext = grid.extent();
        for &idx in &self.members {
            let mut row: Vec<String> = grid.multi_index(idx).iter().map(|k| k.to_string()).collect();
            row.extend(grid.center(idx).iter().map(|c| format!("{c}")));
            row.extend(ext.iter().map(|e| format!("{e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Control values, step time and test-point sampling for graph construction.
#[derive(Debug, Clone)]
pub struct SamplingParams {
    pub controls: Vec<DVector<f64>>,
    pub dt: f64,
    pub pts_per_box: usize,
    pub seed: u64,
}

impl SamplingParams {
    /// Corners, midpoints and `random_levels` seeded random values of `omega`.
    pub fn default_controls(omega: &ControlRange, random_levels: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut out = omega.grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random_levels {
            let unit: Vec<f64> = (0..omega.dim()).map(|_| rng.random::<f64>()).collect();
            out.push(omega.from_unit(&unit));
        }
        out
    }
}

/// Relative test-point positions in the unit cube: the center, then a
/// Halton sequence shifted by a seeded random offset.
pub fn test_offsets(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![vec![0.5; dim]];
    for k in 1..count.max(1) as u64 {
        out.push(
            (0..dim)
                .map(|i| (radical_inverse(k, PRIMES[i % PRIMES.len()]) + shift[i]).fract())
                .collect(),
        );
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

#[derive(Debug, Clone)]
pub struct TransitionGraph {
    grid: BoxGrid,
    params: SamplingParams,
    graph: Digraph,
}

impl TransitionGraph {
    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn params(&self) -> &SamplingParams {
        &self.params
    }

    pub fn successors(&self, idx: usize) -> &[u32] {
        self.graph.successors(idx)
    }

    pub fn reaches_sink(&self, idx: usize) -> bool {
        self.graph.reaches_sink(idx)
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn digraph(&self) -> &Digraph {
        &self.graph
    }
}

pub fn build_transition_graph(sys: &AffineSystem, grid: &BoxGrid, params: &SamplingParams) -> Result<TransitionGraph> {
    check_dim("grid dimension", sys.n(), grid.dim())?;
    if !(params.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if params.pts_per_box == 0 {
        return Err(Error::InvalidArgument("pts_per_box must be at least 1".into()));
    }
    if params.controls.is_empty() {
        return Err(Error::InvalidArgument("at least one control value is needed".into()));
    }
    for u in &params.controls {
        if !sys.omega().contains(u) {
            return Err(Error::InvalidControl(format!("{:?} is outside the control range", u.as_slice())));
        }
    }
    let maps = params
        .controls
        .iter()
        .map(|u| sys.segment_map(u, params.dt))
        .collect::<Result<Vec<_>>>()?;
    let offsets = test_offsets(grid.dim(), params.pts_per_box, params.seed);

    let rows: Vec<(Vec<u32>, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !grid.is_active(idx) {
                return (Vec::new(), false);
            }
            let mut targets = Vec::new();
            let mut sink = false;
            for off in &offsets {
                let x = grid.point_in(idx, off);
                for map in &maps {
                    match grid.locate(&map.apply(&x)) {
                        Some(j) => targets.push(j as u32),
                        None => sink = true,
                    }
                }
            }
            (targets, sink)
        })
        .collect();
    let (succ, sink): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(TransitionGraph {
        grid: grid.clone(),
        params: params.clone(),
        graph: Digraph::from_successors(succ, sink),
    })
}

/// Reachability closure of `from` (including `from`), sink excluded.
pub fn closure(graph: &TransitionGraph, from: &BoxSet, direction: Direction) -> BoxSet {
    BoxSet::from_mask(&graph.graph.reach(from.indices(), direction, false))
}

/// Boxes reachable from `seed_box` by a nonempty path that also lead back to
/// it. Empty when the seed box is wandering.
pub fn control_set_approx(graph: &TransitionGraph, seed_box: usize) -> Result<BoxSet> {
    if seed_box >= graph.grid.len() {
        return Err(Error::InvalidArgument(format!("seed box {seed_box} is outside the grid")));
    }
    let fwd = graph.graph.reach(&[seed_box], Direction::Forward, true);
    let bwd = graph.graph.reach(&[seed_box], Direction::Backward, true);
    let mask: Vec<bool> = fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect();
    Ok(BoxSet::from_mask(&mask))
}

/// Recurrent strongly connected components, largest first.
pub fn chain_components(graph: &TransitionGraph) -> Vec<BoxSet> {
    let universe = graph.grid.len();
    graph
        .graph
        .recurrent_components()
        .into_iter()
        .map(|members| BoxSet { universe, members })
        .collect()
}

/// Whether the forward closure of `set` stays within `set` plus a one-box
/// collar and never leaves the window.
pub fn is_invariant(graph: &TransitionGraph, set: &BoxSet) -> bool {
    let fwd = closure(graph, set, Direction::Forward);
    if fwd.indices().iter().any(|&i| graph.reaches_sink(i)) {
        return false;
    }
    let mut allowed = set.to_mask();
    for &i in set.indices() {
        for j in graph.grid.neighbors(i) {
            allowed[j] = true;
        }
    }
    fwd.indices().iter().all(|&i| allowed[i])
}

/// Subdivides the boxes in `keep` by `factor` per axis and rebuilds the
/// graph on the refined boxes plus a one-box collar.
pub fn refine(
    sys: &AffineSystem,
    graph: &TransitionGraph,
    keep: &BoxSet,
    factor: usize,
    params: &SamplingParams,
    cell_cap: usize,
) -> Result<TransitionGraph> {
    if factor < 2 {
        return Err(Error::InvalidArgument("refinement factor must be at least 2".into()));
    }
    let coarse = &graph.grid;
    let subdivisions: Vec<usize> = coarse.subdivisions.iter().map(|s| s * factor).collect();
    let requested = subdivisions
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .unwrap_or(usize::MAX);
    if requested > cell_cap {
        return Err(Error::MemoryCap {
            requested,
            cap: cell_cap,
        });
    }
    let mut fine = BoxGrid::new(coarse.lo.clone(), coarse.hi.clone(), subdivisions)?;
    let mut active = vec![false; fine.len()];
    let d = coarse.dim();
    let children = factor.pow(d as u32);
    for &c in keep.indices() {
        let base = coarse.multi_index(c);
        for code in 0..children {
            let mut k = code;
            let multi: Vec<usize> = (0..d)
                .map(|i| {
                    let off = k % factor;
                    k /= factor;
                    base[i] * factor + off
                })
                .collect();
            active[fine.index_of(&multi).expect("child in range")] = true;
        }
    }
    let core: Vec<usize> = active.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    for i in core {
        for j in fine.neighbors(i) {
            active[j] = true;
        }
    }
    fine.active = Some(Arc::new(active));
    build_transition_graph(sys, &fine, params)
}

/// Refined-box set mapped back to coarse boxes that contain one of its members.
pub fn coarsen(fine: &BoxGrid, set: &BoxSet, coarse: &BoxGrid) -> BoxSet {
    let members = set
        .indices()
        .iter()
        .filter_map(|&i| coarse.locate_ignoring_mask(&fine.center(i)))
        .collect();
    BoxSet::from_indices(coarse.len(), members).expect("indices in range")
}

impl BoxGrid {
    fn locate_ignoring_mask(&self, x: &DVector<f64>) -> Option<usize> {
        let unmasked = BoxGrid {
            active: None,
            ..self.clone()
        };
        unmasked.locate(x)
    }
}
