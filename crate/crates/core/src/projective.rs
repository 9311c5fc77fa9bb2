//! Projective compactification: the homogeneous embedding in `R^{n+1}`,
//! dynamics on `P^n`, Lyapunov estimates and the boundary at infinity of
//! control sets and chain control sets.
//!
//! Points of `P^n` are unit vectors with a canonical sign. The level at
//! infinity `P^{n,0}` is the set of points with vanishing last coordinate.

use std::io;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::floquet::ContinuationRecord;
use crate::graph::Digraph;
use crate::linalg::{expm, one_norm};
use crate::reach::{test_offsets, BoxGrid, BoxSet};
use crate::system::{AffineSystem, ControlRange, PiecewiseControl};

pub const DEFAULT_LEVEL_TOL: f64 = 1e-6;
/// Cells per face axis of the default sphere grid.
pub const DEFAULT_SPHERE_CELLS: usize = 64;

const COLLAPSE: f64 = 1e-300;
/// Largest 1-norm of a single exponential substep.
const SUBSTEP_NORM: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Level {
    /// At infinity (`z = 0`).
    P0,
    /// In the affine part (`z != 0`).
    P1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjPoint {
    rep: DVector<f64>,
    level: Level,
}

fn canonical(v: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if !norm.is_finite() || norm < COLLAPSE {
        return Err(Error::ZeroVector);
    }
    let mut u = v / norm;
    if let Some(first) = u.iter().find(|c| **c != 0.0) {
        if *first < 0.0 {
            u.neg_mut();
        }
    }
    Ok(u)
}

impl ProjPoint {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        Self::with_level_tol(v, DEFAULT_LEVEL_TOL)
    }

    pub fn with_level_tol(v: DVector<f64>, level_tol: f64) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidArgument("projective points need ambient dimension >= 2".into()));
        }
        let rep = canonical(&v)?;
        let level = if rep[rep.len() - 1].abs() > level_tol {
            Level::P1
        } else {
            Level::P0
        };
        Ok(Self { rep, level })
    }

    /// `[x : 1]`, the image of a state `x`.
    pub fn of_state(x: &DVector<f64>) -> Result<Self> {
        Self::new(x.push(1.0))
    }

    /// `[x : 0]`, the direction of `x` at infinity.
    pub fn at_infinity(x: &DVector<f64>) -> Result<Self> {
        let mut p = Self::new(x.push(0.0))?;
        p.level = Level::P0;
        Ok(p)
    }

    /// Point with vanishing last coordinate, forced onto level 0.
    fn from_level_zero(mut v: DVector<f64>) -> Result<Self> {
        let last = v.len() - 1;
        v[last] = 0.0;
        Ok(Self {
            rep: canonical(&v)?,
            level: Level::P0,
        })
    }

    pub fn rep(&self) -> &DVector<f64> {
        &self.rep
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn ambient_dim(&self) -> usize {
        self.rep.len()
    }
}

/// `min(|x - y|, |x + y|)` for unit representatives.
pub fn proj_metric(p: &ProjPoint, q: &ProjPoint) -> f64 {
    debug_assert_eq!(p.ambient_dim(), q.ambient_dim());
    (&p.rep - &q.rep).norm().min((&p.rep + &q.rep).norm())
}

/// `P^{n-1} -> P^{n,0}`, `[x] -> [x : 0]`.
pub fn embed_point(p: &ProjPoint) -> ProjPoint {
    ProjPoint::at_infinity(&p.rep).expect("unit representative")
}

/// Inverse of [`embed_point`] on `P^{n,0}`.
pub fn restrict_point(p: &ProjPoint) -> Result<ProjPoint> {
    if p.level != Level::P0 || p.ambient_dim() < 3 {
        return Err(Error::NotAtInfinity);
    }
    ProjPoint::new(p.rep.rows(0, p.ambient_dim() - 1).into_owned())
}

/// Homogeneous bilinear system on `R^{n+1}` with blocks
/// `Â = [[A, d], [0, 0]]` and `B̂_i = [[B_i, c_i], [0, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomEmbedding {
    a_hat: DMatrix<f64>,
    b_hat: Vec<DMatrix<f64>>,
    omega: ControlRange,
}

pub fn embed_system(sys: &AffineSystem) -> HomEmbedding {
    let n = sys.n();
    let block = |m: &DMatrix<f64>, col: DVector<f64>| {
        let mut out = DMatrix::zeros(n + 1, n + 1);
        out.view_mut((0, 0), (n, n)).copy_from(m);
        out.view_mut((0, n), (n, 1)).copy_from(&col);
        out
    };
    HomEmbedding {
        a_hat: block(sys.a(), sys.d().clone()),
        b_hat: (0..sys.m())
            .map(|i| block(&sys.b()[i], sys.c().column(i).into_owned()))
            .collect(),
        omega: sys.omega().clone(),
    }
}

impl HomEmbedding {
    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &[DMatrix<f64>] {
        &self.b_hat
    }

    pub fn omega(&self) -> &ControlRange {
        &self.omega
    }

    /// `Â + Σ u_i B̂_i`.
    pub fn matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("control", self.b_hat.len(), u.len())?;
        let mut m = self.a_hat.clone();
        for (b, ui) in self.b_hat.iter().zip(u.iter()) {
            m += b * *ui;
        }
        Ok(m)
    }

    /// The embedding as a bilinear [`AffineSystem`] on `R^{n+1}`.
    pub fn as_system(&self) -> AffineSystem {
        AffineSystem::bilinear(self.a_hat.clone(), self.b_hat.clone(), self.omega.clone())
            .expect("embedding blocks are consistent")
    }
}

/// `exp(dt M)` split into substeps of bounded norm.
fn substep_matrix(m: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, usize) {
    let k = ((one_norm(m) * dt) / SUBSTEP_NORM).ceil().max(1.0) as usize;
    (expm(&(m * (dt / k as f64))), k)
}

pub fn proj_step(emb: &HomEmbedding, p: &ProjPoint, u: &DVector<f64>, dt: f64) -> Result<ProjPoint> {
    check_dim("projective point", emb.dim(), p.ambient_dim())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if !emb.omega.contains(u) {
        return Err(Error::InvalidControl(format!("{:?} is outside the control range", u.as_slice())));
    }
    let (step, k) = substep_matrix(&emb.matrix(u)?, dt);
    let mut v = p.rep.clone();
    for _ in 0..k {
        v = &step * v;
        let norm = v.norm();
        if !norm.is_finite() || norm < COLLAPSE {
            return Err(Error::ZeroVector);
        }
        v /= norm;
    }
    match p.level {
        Level::P0 => ProjPoint::from_level_zero(v),
        Level::P1 => ProjPoint::new(v),
    }
}

/// `(1/T) log |Φ_u(T,0) x|` for the homogeneous part of `sys`.
pub fn lyapunov_estimate(sys: &AffineSystem, ctrl: &PiecewiseControl, x: &DVector<f64>, horizon: f64) -> Result<f64> {
    check_dim("initial state", sys.n(), x.len())?;
    sys.check_control(ctrl)?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let norm = x.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let mut v = x / norm;
    let mut log_sum = 0.0;
    for (j, len) in ctrl.pieces(0.0, horizon) {
        let (step, k) = substep_matrix(&sys.a_of_u(&ctrl.segments()[j].value)?, len);
        for _ in 0..k {
            v = &step * v;
            let n = v.norm();
            if !n.is_finite() || n < COLLAPSE {
                return Err(Error::ZeroVector);
            }
            log_sum += n.ln();
            v /= n;
        }
    }
    Ok(log_sum / horizon)
}

/// Cube-face grid of `P^{N-1}`. A unit vector lies on the face of its
/// largest-magnitude coordinate, taken positive, which identifies antipodal
/// boxes; the other coordinates divided by it are gridded uniformly on
/// `[-1, 1]`. `S^2` has 6 faces, `P^2` keeps 3 of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjGrid {
    ambient: usize,
    cells: usize,
}

impl ProjGrid {
    pub fn new(ambient: usize, cells: usize) -> Result<Self> {
        if ambient < 2 {
            return Err(Error::InvalidArgument("projective grid needs ambient dimension >= 2".into()));
        }
        if cells == 0 {
            return Err(Error::InvalidArgument("projective grid needs at least one cell per axis".into()));
        }
        Ok(Self { ambient, cells })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    fn per_face(&self) -> usize {
        self.cells.pow(self.ambient as u32 - 1)
    }

    pub fn len(&self) -> usize {
        self.ambient * self.per_face()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn decompose(&self, idx: usize) -> (usize, Vec<usize>) {
        let face = idx / self.per_face();
        let mut rest = idx % self.per_face();
        let multi = (0..self.ambient - 1)
            .map(|_| {
                let k = rest % self.cells;
                rest /= self.cells;
                k
            })
            .collect();
        (face, multi)
    }

    /// Coordinates other than the face coordinate, in increasing order.
    fn others(&self, face: usize) -> impl Iterator<Item = usize> {
        (0..self.ambient).filter(move |&j| j != face)
    }

    pub fn locate(&self, v: &DVector<f64>) -> Option<usize> {
        if v.len() != self.ambient {
            return None;
        }
        let (face, top) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, x)| if x.abs() > best.1 { (j, x.abs()) } else { best });
        if !(top > 0.0) || !top.is_finite() {
            return None;
        }
        let pivot = v[face];
        let mut idx = 0;
        let mut stride = 1;
        for j in self.others(face) {
            let c = v[j] / pivot;
            let k = (((c + 1.0) * 0.5 * self.cells as f64).floor().max(0.0) as usize).min(self.cells - 1);
            idx += k * stride;
            stride *= self.cells;
        }
        Some(face * self.per_face() + idx)
    }

    /// Point of box `idx` at relative face position `unit` in `[0,1]^{N-1}`.
    pub fn point_in(&self, idx: usize, unit: &[f64]) -> DVector<f64> {
        let (face, multi) = self.decompose(idx);
        let mut v = DVector::zeros(self.ambient);
        v[face] = 1.0;
        for (slot, j) in self.others(face).enumerate() {
            v[j] = -1.0 + 2.0 * (multi[slot] as f64 + unit[slot]) / self.cells as f64;
        }
        let n = v.norm();
        v / n
    }

    pub fn center(&self, idx: usize) -> ProjPoint {
        ProjPoint::new(self.point_in(idx, &vec![0.5; self.ambient - 1])).expect("nonzero")
    }

    /// Whether the closed box meets `z = 0`.
    pub fn touches_infinity(&self, idx: usize) -> bool {
        let (face, multi) = self.decompose(idx);
        let z = self.ambient - 1;
        if face == z {
            return false;
        }
        let k = multi[self.ambient - 2];
        let lo = -1.0 + 2.0 * k as f64 / self.cells as f64;
        let hi = -1.0 + 2.0 * (k + 1) as f64 / self.cells as f64;
        lo <= 0.0 && hi >= 0.0
    }

    /// The box center moved onto `z = 0`; `None` unless the box touches it.
    pub fn level_zero_point(&self, idx: usize) -> Option<ProjPoint> {
        self.touches_infinity(idx)
            .then(|| ProjPoint::from_level_zero(self.point_in(idx, &vec![0.5; self.ambient - 1])).expect("nonzero"))
    }

    /// Largest diameter of a box, in the projective metric. Boxes shrink away
    /// from the face center, so only the central boxes are measured.
    pub fn box_diameter(&self) -> f64 {
        let d = self.ambient - 1;
        let mid = [(self.cells - 1) / 2, self.cells / 2];
        let central: Vec<usize> = (0..1usize << d)
            .map(|mask| (0..d).rev().fold(0, |acc, i| acc * self.cells + mid[mask >> i & 1]))
            .collect();
        self.diameter_over(central)
    }

    fn diameter_over(&self, boxes: impl IntoIterator<Item = usize>) -> f64 {
        let d = self.ambient - 1;
        let corners: Vec<Vec<f64>> = (0..1usize << d)
            .map(|mask| (0..d).map(|i| (mask >> i & 1) as f64).collect())
            .collect();
        boxes
            .into_iter()
            .map(|idx| {
                let pts: Vec<ProjPoint> = corners
                    .iter()
                    .map(|c| ProjPoint::new(self.point_in(idx, c)).expect("nonzero"))
                    .collect();
                let mut best: f64 = 0.0;
                for a in 0..pts.len() {
                    for b in a + 1..pts.len() {
                        best = best.max(proj_metric(&pts[a], &pts[b]));
                    }
                }
                best
            })
            .fold(0.0, f64::max)
    }
}

/// Default clustering radius: three box diameters of the default sphere grid.
pub fn default_cluster_tol(ambient: usize) -> f64 {
    3.0 * ProjGrid::new(ambient, DEFAULT_SPHERE_CELLS)
        .expect("ambient >= 2")
        .box_diameter()
}

#[derive(Debug, Clone, Copy)]
pub struct ProjGraphOptions {
    pub dt: f64,
    pub pts_per_box: usize,
    pub seed: u64,
    /// Chain jump radius: each image point also reaches the boxes at this
    /// distance along the coordinate tangent directions.
    pub jump: f64,
}

/// Transition graph of a projective grid under the projectivized linear maps
/// `exp(dt M_k)`, with jumps of bounded size.
#[derive(Debug, Clone)]
pub struct ProjTransitionGraph {
    grid: ProjGrid,
    graph: Digraph,
}

impl ProjTransitionGraph {
    pub fn build(grid: ProjGrid, matrices: &[DMatrix<f64>], opts: &ProjGraphOptions) -> Result<Self> {
        if !(opts.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(opts.jump >= 0.0) {
            return Err(Error::InvalidArgument("jump radius must be nonnegative".into()));
        }
        if matrices.is_empty() || opts.pts_per_box == 0 {
            return Err(Error::InvalidArgument("need at least one control and one test point".into()));
        }
        for m in matrices {
            check_dim("projective generator", grid.ambient, m.nrows())?;
        }
        let maps: Vec<DMatrix<f64>> = matrices
            .iter()
            .map(|m| {
                let (step, k) = substep_matrix(m, opts.dt);
                (0..k).fold(DMatrix::identity(grid.ambient, grid.ambient), |acc, _| &step * acc)
            })
            .collect();
        let offsets = test_offsets(grid.ambient - 1, opts.pts_per_box, opts.seed);
        let n = grid.ambient;
        let succ: Vec<Vec<u32>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut out = Vec::with_capacity(offsets.len() * maps.len());
                for off in &offsets {
                    let x = grid.point_in(idx, off);
                    for m in &maps {
                        let y = m * &x;
                        let Some(j) = grid.locate(&y) else { continue };
                        out.push(j as u32);
                        if opts.jump == 0.0 {
                            continue;
                        }
                        let y = y.normalize();
                        for axis in 0..n {
                            let mut t = -&y * y[axis];
                            t[axis] += 1.0;
                            let tn = t.norm();
                            if tn < 1e-8 {
                                continue;
                            }
                            for sign in [-1.0, 1.0] {
                                if let Some(j) = grid.locate(&(&y + &t * (sign * opts.jump / tn))) {
                                    out.push(j as u32);
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        let sink = vec![false; succ.len()];
        Ok(Self {
            grid,
            graph: Digraph::from_successors(succ, sink),
        })
    }

    pub fn grid(&self) -> &ProjGrid {
        &self.grid
    }

    pub fn successors(&self, idx: usize) -> &[u32] {
        self.graph.successors(idx)
    }

    pub fn chain_components(&self) -> Vec<BoxSet> {
        let universe = self.grid.len();
        self.graph
            .recurrent_components()
            .into_iter()
            .map(|m| BoxSet::from_indices(universe, m).expect("indices in range"))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionCluster {
    #[serde(serialize_with = "ser_point")]
    pub representative: ProjPoint,
    pub members: usize,
    /// Members that came from continuation blow-up records.
    pub high_confidence: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomMatch {
    /// Index into the `P^n` component list.
    pub component: usize,
    /// Index into the `P^{n-1}` component list of the homogeneous part.
    pub hom_component: usize,
    pub min_distance: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InfinityBoundaryReport {
    #[serde(serialize_with = "ser_points")]
    pub directions: Vec<ProjPoint>,
    pub clusters: Vec<DirectionCluster>,
    pub matches: Vec<HomMatch>,
}

fn ser_point<S: serde::Serializer>(p: &ProjPoint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(p.rep.iter())
}

fn ser_points<S: serde::Serializer>(ps: &[ProjPoint], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ps.iter().map(|p| p.rep.as_slice().to_vec()))
}

impl InfinityBoundaryReport {
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// CSV rows of unit representatives with a level column.
    pub fn write_directions_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.directions.first().map_or(0, ProjPoint::ambient_dim);
        let mut header: Vec<String> = (0..dim).map(|i| format!("p{i}")).collect();
        header.push("level".into());
        writeln!(w, "{}", header.join(","))?;
        for p in &self.directions {
            let mut row: Vec<String> = p.rep.iter().map(|c| format!("{c}")).collect();
            row.push(format!("{:?}", p.level));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Leader clustering in the projective metric; representatives are the
/// normalized sign-aligned means of their members.
fn cluster(points: &[(ProjPoint, bool)], tol: f64) -> Vec<DirectionCluster> {
    struct Acc {
        leader: ProjPoint,
        sum: DVector<f64>,
        members: usize,
        high: usize,
    }
    let mut accs: Vec<Acc> = Vec::new();
    for (p, high) in points {
        let nearest = accs
            .iter_mut()
            .map(|a| (proj_metric(&a.leader, p), a))
            .filter(|(d, _)| *d <= tol)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match nearest {
            Some((_, acc)) => {
                let sign = if acc.leader.rep.dot(&p.rep) >= 0.0 { 1.0 } else { -1.0 };
                acc.sum += &p.rep * sign;
                acc.members += 1;
                acc.high += *high as usize;
            }
            None => accs.push(Acc {
                leader: p.clone(),
                sum: p.rep.clone(),
                members: 1,
                high: *high as usize,
            }),
        }
    }
    let mut out: Vec<DirectionCluster> = accs
        .into_iter()
        .map(|a| DirectionCluster {
            representative: ProjPoint::from_level_zero(a.sum).unwrap_or(a.leader),
            members: a.members,
            high_confidence: a.high,
        })
        .collect();
    out.sort_by(|a, b| b.members.cmp(&a.members));
    out
}

#[derive(Debug, Clone, Copy)]
pub struct DirectionOptions {
    pub norm_floor: f64,
    pub cluster_tol: f64,
}

impl DirectionOptions {
    /// `norm_floor = 0.8 ×` window radius and the default cluster radius.
    pub fn for_window(grid: &BoxGrid) -> Self {
        Self {
            norm_floor: 0.8 * grid.window_radius(),
            cluster_tol: default_cluster_tol(grid.dim() + 1),
        }
    }
}

/// Directions at infinity of the states in `points` with norm at least the
/// floor, plus blow-up records of a continuation run, clustered. The report
/// is empty when nothing reaches the floor.
pub fn infinity_boundary_directions(
    points: &[DVector<f64>],
    records: &[ContinuationRecord],
    opts: &DirectionOptions,
) -> Result<InfinityBoundaryReport> {
    if !(opts.norm_floor > 0.0) {
        return Err(Error::InvalidArgument("norm_floor must be positive".into()));
    }
    let mut tagged = Vec::new();
    for x in points {
        if x.norm() >= opts.norm_floor {
            tagged.push((ProjPoint::at_infinity(x)?, false));
        }
    }
    for r in records {
        if let (Some(x), Some(norm)) = (r.solution.point(), r.norm_x) {
            if norm >= opts.norm_floor {
                tagged.push((ProjPoint::at_infinity(x)?, true));
            }
        }
    }
    Ok(InfinityBoundaryReport {
        clusters: cluster(&tagged, opts.cluster_tol),
        directions: tagged.into_iter().map(|(p, _)| p).collect(),
        matches: Vec::new(),
    })
}

/// Estimator (a) on a box set: uses the box centers.
pub fn infinity_boundary_of_set(
    grid: &BoxGrid,
    set: &BoxSet,
    records: &[ContinuationRecord],
    opts: &DirectionOptions,
) -> Result<InfinityBoundaryReport> {
    let centers: Vec<DVector<f64>> = set.indices().iter().map(|&i| grid.center(i)).collect();
    infinity_boundary_directions(&centers, records, opts)
}

#[derive(Debug, Clone, Copy)]
pub struct SphereGridParams {
    /// Cells per face axis on `P^n`.
    pub cells: usize,
    /// Cells per face axis on `P^{n-1}`.
    pub hom_cells: usize,
    pub pts_per_box: usize,
    pub seed: u64,
    /// Chain jump radius; `None` uses a tenth of the box diameter of each grid.
    pub jump: Option<f64>,
    pub cell_cap: usize,
}

impl Default for SphereGridParams {
    fn default() -> Self {
        Self {
            cells: DEFAULT_SPHERE_CELLS,
            hom_cells: DEFAULT_SPHERE_CELLS,
            pts_per_box: 16,
            seed: 0,
            jump: None,
            cell_cap: crate::reach::DEFAULT_CELL_CAP,
        }
    }
}

/// Chain components on `P^n` and on `P^{n-1}` for the homogeneous part, with
/// the boundary-at-infinity report.
#[derive(Debug, Clone)]
pub struct ChainInfinityAnalysis {
    pub graph: ProjTransitionGraph,
    pub components: Vec<BoxSet>,
    pub hom_graph: ProjTransitionGraph,
    pub hom_components: Vec<BoxSet>,
    /// Components touching `P^{n,0}`.
    pub touching: Vec<usize>,
    pub report: InfinityBoundaryReport,
    /// Distance up to which a component and an embedded homogeneous
    /// component count as meeting.
    pub match_tol: f64,
}

impl ChainInfinityAnalysis {
    pub fn grid(&self) -> &ProjGrid {
        self.graph.grid()
    }

    pub fn component_of(&self, p: &ProjPoint) -> Option<usize> {
        let idx = self.grid().locate(p.rep())?;
        self.components.iter().position(|c| c.contains(idx))
    }

    /// Level-0 samples of the boxes of component `k` touching infinity.
    pub fn level_zero_slice(&self, k: usize) -> Vec<ProjPoint> {
        self.components[k]
            .indices()
            .iter()
            .filter_map(|&i| self.grid().level_zero_point(i))
            .collect()
    }

    /// Matches of component `k` with homogeneous components.
    pub fn matches_of(&self, k: usize) -> Vec<HomMatch> {
        self.report.matches.iter().copied().filter(|m| m.component == k).collect()
    }
}

pub fn infinity_boundary_chain(
    emb: &HomEmbedding,
    params: &SphereGridParams,
    controls: &[DVector<f64>],
    dt: f64,
) -> Result<ChainInfinityAnalysis> {
    let n1 = emb.dim();
    if n1 < 3 {
        return Err(Error::InvalidArgument("the homogeneous part needs state dimension >= 2".into()));
    }
    let grid = ProjGrid::new(n1, params.cells)?;
    let hom_grid = ProjGrid::new(n1 - 1, params.hom_cells)?;
    for g in [&grid, &hom_grid] {
        if g.len() > params.cell_cap {
            return Err(Error::MemoryCap {
                requested: g.len(),
                cap: params.cell_cap,
            });
        }
    }
    for u in controls {
        if !emb.omega.contains(u) {
            return Err(Error::InvalidControl(format!("{:?} is outside the control range", u.as_slice())));
        }
    }
    let full: Vec<DMatrix<f64>> = controls.iter().map(|u| emb.matrix(u)).collect::<Result<_>>()?;
    let hom: Vec<DMatrix<f64>> = full.iter().map(|m| m.view((0, 0), (n1 - 1, n1 - 1)).into_owned()).collect();

    let options = |g: &ProjGrid| ProjGraphOptions {
        dt,
        pts_per_box: params.pts_per_box,
        seed: params.seed,
        jump: params.jump.unwrap_or_else(|| 0.1 * g.box_diameter()),
    };
    let graph = ProjTransitionGraph::build(grid, &full, &options(&grid))?;
    let hom_graph = ProjTransitionGraph::build(hom_grid, &hom, &options(&hom_grid))?;
    let components = graph.chain_components();
    let hom_components = hom_graph.chain_components();

    let match_tol = 2.0 * grid.box_diameter().max(hom_grid.box_diameter());
    let embedded: Vec<Vec<ProjPoint>> = hom_components
        .iter()
        .map(|c| c.indices().iter().map(|&i| embed_point(&hom_grid.center(i))).collect())
        .collect();

    let mut touching = Vec::new();
    let mut directions = Vec::new();
    let mut matches = Vec::new();
    for (k, comp) in components.iter().enumerate() {
        let slice: Vec<ProjPoint> = comp.indices().iter().filter_map(|&i| grid.level_zero_point(i)).collect();
        if slice.is_empty() {
            continue;
        }
        touching.push(k);
        for (h, pts) in embedded.iter().enumerate() {
            let dist = slice
                .par_iter()
                .map(|p| pts.iter().map(|q| proj_metric(p, q)).fold(f64::INFINITY, f64::min))
                .reduce(|| f64::INFINITY, f64::min);
            if dist <= match_tol {
                matches.push(HomMatch {
                    component: k,
                    hom_component: h,
                    min_distance: dist,
                });
            }
        }
        directions.extend(slice);
    }
    let tagged: Vec<(ProjPoint, bool)> = directions.iter().map(|p| (p.clone(), false)).collect();
    let report = InfinityBoundaryReport {
        clusters: cluster(&tagged, default_cluster_tol(n1)),
        directions,
        matches,
    };
    Ok(ChainInfinityAnalysis {
        graph,
        components,
        hom_graph,
        hom_components,
        touching,
        report,
        match_tol,
    })
}
