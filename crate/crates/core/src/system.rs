//! Affine control systems `x' = A(u) x + C u + d`, piecewise-constant
//! controls and exact trajectory propagation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{expm, rank};

/// Default numerical rank cutoff, relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Axis-aligned control range `[lo_1, hi_1] x ... x [lo_m, hi_m]` containing 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRange {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ControlRange {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("control range bounds", lo.len(), hi.len())?;
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "control range bound {i} is not finite"
                )));
            }
            if l > 0.0 || h < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "0 is not in the control range: component {i} is [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[-r, r]^m`.
    pub fn symmetric(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r.abs(); m], vec![r.abs(); m])
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

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        const SLACK: f64 = 1e-12;
        u.len() == self.dim()
            && u.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - SLACK && v <= h + SLACK)
    }

    /// All `2^m` corner points (bang-bang values).
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let m = self.dim();
        (0..1usize << m)
            .map(|mask| {
                DVector::from_fn(m, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.hi[i]
                    } else {
                        self.lo[i]
                    }
                })
            })
            .collect()
    }

    /// Tensor grid with `levels` equispaced values per axis (`levels >= 2`).
    pub fn grid(&self, levels: usize) -> Vec<DVector<f64>> {
        let m = self.dim();
        let levels = levels.max(2);
        let total = levels.pow(m as u32);
        (0..total)
            .map(|mut k| {
                DVector::from_fn(m, |i, _| {
                    let j = k % levels;
                    k /= levels;
                    self.lo[i] + (self.hi[i] - self.lo[i]) * j as f64 / (levels - 1) as f64
                })
            })
            .collect()
    }

    /// Maps a point of the unit cube `[0,1]^m` into the range.
    pub fn from_unit(&self, unit: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.lo[i] + (self.hi[i] - self.lo[i]) * unit[i])
    }
}

/// Affine map `x -> linear * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        Self {
            linear: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    /// `next ∘ self`: first `self`, then `next`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &next.linear * &self.linear,
            offset: &next.linear * &self.offset + &next.offset,
        }
    }

    /// Splits an augmented `(n+1) x (n+1)` matrix `[[L, b], [0, 1]]`.
    pub fn from_augmented(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() - 1;
        Self {
            linear: m.view((0, 0), (n, n)).into_owned(),
            offset: m.view((0, n), (n, 1)).column(0).into_owned(),
        }
    }
}

/// Affine vector field `x -> matrix * x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVectorField {
    pub translation: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl AffineVectorField {
    pub fn new(translation: DVector<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                what: "vector field matrix columns",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        check_dim("vector field translation", matrix.nrows(), translation.len())?;
        Ok(Self {
            translation,
            matrix,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            translation: DVector::zeros(n),
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.translation
    }

    /// Flattened `(translation, matrix)` coordinates in the Lie algebra.
    fn coords(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_iterator(
            n + n * n,
            self.translation.iter().chain(self.matrix.iter()).copied(),
        )
    }
}

/// Lie bracket of affine fields, `[X,Y](x) = -(AB - BA) x - (A b - B a)` for
/// `X = Ax + a`, `Y = Bx + b`.
pub fn lie_bracket(x: &AffineVectorField, y: &AffineVectorField) -> Result<AffineVectorField> {
    check_dim("lie bracket operands", x.dim(), y.dim())?;
    let (a_mat, a) = (&x.matrix, &x.translation);
    let (b_mat, b) = (&y.matrix, &y.translation);
    Ok(AffineVectorField {
        translation: -(a_mat * b - b_mat * a),
        matrix: -(a_mat * b_mat - b_mat * a_mat),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    a: DMatrix<f64>,
    b: Vec<DMatrix<f64>>,
    c: DMatrix<f64>,
    d: DVector<f64>,
    omega: ControlRange,
}

impl AffineSystem {
    /// `c` is `n x m` with columns `c_1..c_m`.
    pub fn new(
        a: DMatrix<f64>,
        b: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
        d: DVector<f64>,
        omega: ControlRange,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        let m = omega.dim();
        check_dim("number of B matrices", m, b.len())?;
        for bi in &b {
            check_dim("B rows", n, bi.nrows())?;
            check_dim("B columns", n, bi.ncols())?;
        }
        check_dim("C rows", n, c.nrows())?;
        check_dim("C columns", m, c.ncols())?;
        check_dim("d length", n, d.len())?;
        let finite = a.iter().all(|v| v.is_finite())
            && b.iter().all(|bi| bi.iter().all(|v| v.is_finite()))
            && c.iter().all(|v| v.is_finite())
            && d.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("system data must be finite".into()));
        }
        Ok(Self { a, b, c, d, omega })
    }

    /// Bilinear system `x' = (A + sum u_i B_i) x` (C and d zero).
    pub fn bilinear(a: DMatrix<f64>, b: Vec<DMatrix<f64>>, omega: ControlRange) -> Result<Self> {
        let n = a.nrows();
        let m = omega.dim();
        Self::new(a, b, DMatrix::zeros(n, m), DVector::zeros(n), omega)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.omega.dim()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn omega(&self) -> &ControlRange {
        &self.omega
    }

    /// The same system with `C` and `d` set to zero.
    pub fn homogeneous_part(&self) -> AffineSystem {
        AffineSystem {
            c: DMatrix::zeros(self.n(), self.m()),
            d: DVector::zeros(self.n()),
            ..self.clone()
        }
    }

    /// `A(u) = A + sum_i u_i B_i`.
    pub fn a_of_u(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("control vector", self.m(), u.len())?;
        let mut out = self.a.clone();
        for (ui, bi) in u.iter().zip(&self.b) {
            out += bi * *ui;
        }
        Ok(out)
    }

    /// `C u + d`.
    pub fn forcing(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("control vector", self.m(), u.len())?;
        Ok(&self.c * u + &self.d)
    }

    pub fn vector_field(&self, u: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state vector", self.n(), x.len())?;
        Ok(self.a_of_u(u)? * x + self.forcing(u)?)
    }

    /// `X^u(x) = A(u) x + C u + d`.
    pub fn field_at(&self, u: &DVector<f64>) -> Result<AffineVectorField> {
        Ok(AffineVectorField {
            translation: self.forcing(u)?,
            matrix: self.a_of_u(u)?,
        })
    }

    /// Drift `f_0(x) = A x + d`.
    pub fn drift(&self) -> AffineVectorField {
        AffineVectorField {
            translation: self.d.clone(),
            matrix: self.a.clone(),
        }
    }

    /// Control field `f_i(x) = B_i x + c_i`.
    pub fn control_field(&self, i: usize) -> AffineVectorField {
        AffineVectorField {
            translation: self.c.column(i).into_owned(),
            matrix: self.b[i].clone(),
        }
    }

    /// `[[A(u), C u + d], [0, 0]]`.
    pub fn augmented(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a_of_u(u)?);
        m.view_mut((0, n), (n, 1)).copy_from(&self.forcing(u)?);
        Ok(m)
    }

    /// Exact flow map over time `s` (any sign) under the constant control `u`.
    pub fn segment_map(&self, u: &DVector<f64>, s: f64) -> Result<AffineMap> {
        Ok(AffineMap::from_augmented(&expm(&(self.augmented(u)? * s))))
    }

    /// Equilibrium of the constant control `u`, if `A(u)` is invertible.
    pub fn equilibrium(&self, u: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        let a_u = self.a_of_u(u)?;
        let rhs = -self.forcing(u)?;
        Ok(a_u.lu().solve(&rhs))
    }

    pub fn check_control(&self, ctrl: &PiecewiseControl) -> Result<()> {
        check_dim("control vector", self.m(), ctrl.dim())?;
        for (k, seg) in ctrl.segments().iter().enumerate() {
            if !self.omega.contains(&seg.value) {
                return Err(Error::InvalidControl(format!(
                    "segment {k} value {:?} lies outside the control range",
                    seg.value.as_slice()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub value: DVector<f64>,
    pub duration: f64,
}

/// Periodic piecewise-constant control given by its segments on one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseControl {
    segments: Vec<Segment>,
    period: f64,
}

impl PiecewiseControl {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidControl("no segments".into()))?;
        let m = first.value.len();
        for (k, seg) in segments.iter().enumerate() {
            check_dim("control segment value", m, seg.value.len())?;
            if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                return Err(Error::InvalidControl(format!(
                    "segment {k} has non-positive duration {}",
                    seg.duration
                )));
            }
            if seg.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidControl(format!("segment {k} value is not finite")));
            }
        }
        let period = segments.iter().map(|s| s.duration).sum();
        Ok(Self { segments, period })
    }

    /// Shorthand from `(value, duration)` pairs.
    pub fn from_pairs(pairs: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(v, d)| Segment {
                    value: DVector::from_column_slice(v),
                    duration: *d,
                })
                .collect(),
        )
    }

    pub fn constant(value: DVector<f64>, period: f64) -> Result<Self> {
        Self::new(vec![Segment {
            value,
            duration: period,
        }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dim(&self) -> usize {
        self.segments[0].value.len()
    }

    /// Value at time `t` of the periodic extension.
    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        let local = t.rem_euclid(self.period);
        let mut start = 0.0;
        for seg in &self.segments {
            if local < start + seg.duration {
                return &seg.value;
            }
            start += seg.duration;
        }
        &self.segments[self.segments.len() - 1].value
    }

    /// The same control viewed as a `k * period`-periodic control.
    pub fn repeated(&self, k: usize) -> PiecewiseControl {
        let segments: Vec<Segment> = (0..k.max(1))
            .flat_map(|_| self.segments.iter().cloned())
            .collect();
        PiecewiseControl::new(segments).expect("repetition of a valid control")
    }

    /// Constant pieces `(segment index, length)` covering `[s, t]` for `s <= t`.
    pub fn pieces(&self, s: f64, t: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut remaining = t - s;
        let snap = 1e-14 * self.period.max(1.0);
        if !(remaining > snap) {
            return out;
        }
        let len = self.segments.len();
        let local = s.rem_euclid(self.period);
        let mut j = 0;
        let mut start = 0.0;
        while j < len && start + self.segments[j].duration <= local {
            start += self.segments[j].duration;
            j += 1;
        }
        let mut offset = if j == len {
            j = 0;
            0.0
        } else {
            local - start
        };
        while remaining > snap {
            let avail = self.segments[j].duration - offset;
            let take = avail.min(remaining);
            if take > 0.0 {
                out.push((j, take));
            }
            remaining -= take;
            offset = 0.0;
            j = (j + 1) % len;
        }
        out
    }

    /// Restriction to `[s, s + len]` as a new `len`-periodic control.
    pub fn window(&self, s: f64, len: f64) -> Result<PiecewiseControl> {
        let segments: Vec<Segment> = self
            .pieces(s, s + len)
            .into_iter()
            .map(|(j, d)| Segment {
                value: self.segments[j].value.clone(),
                duration: d,
            })
            .collect();
        PiecewiseControl::new(segments)
    }

    /// Concatenation: `self` on `[0, σ)`, then `other`.
    pub fn concat(&self, other: &PiecewiseControl) -> PiecewiseControl {
        let segments = self
            .segments
            .iter()
            .chain(&other.segments)
            .cloned()
            .collect();
        PiecewiseControl::new(segments).expect("concatenation of valid controls")
    }
}

/// Sampled trajectory. Times are increasing; for backward simulation the
/// first sample is the state at the (negative) final time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub control: PiecewiseControl,
}

impl Trajectory {
    /// State at the end of the simulated horizon.
    pub fn endpoint(&self) -> &DVector<f64> {
        if self.times.last().copied().unwrap_or(0.0) > 0.0 {
            self.states.last().expect("nonempty trajectory")
        } else {
            self.states.first().expect("nonempty trajectory")
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Extra samples inside segments every `sample_step` time units.
    pub sample_step: Option<f64>,
}

/// Exact propagation of `x0` over `[0, t]` (or `[t, 0]` for `t < 0`).
pub fn simulate(
    sys: &AffineSystem,
    ctrl: &PiecewiseControl,
    x0: &DVector<f64>,
    t: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    check_dim("initial state", sys.n(), x0.len())?;
    sys.check_control(ctrl)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument("simulation horizon must be finite".into()));
    }
    let direction = if t < 0.0 { -1.0 } else { 1.0 };
    let pieces = if t >= 0.0 {
        ctrl.pieces(0.0, t)
    } else {
        let mut p = ctrl.pieces(t, 0.0);
        p.reverse();
        p
    };

    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut x = x0.clone();
    let mut clock = 0.0;
    let step = opts.sample_step.filter(|h| *h > 0.0);
    for (j, len) in pieces {
        let u = &ctrl.segments()[j].value;
        let mut left = len;
        if let Some(h) = step {
            if h < len {
                let step_map = sys.segment_map(u, direction * h)?;
                while left > h * (1.0 + 1e-12) {
                    x = step_map.apply(&x);
                    left -= h;
                    clock += direction * h;
                    push_state(&mut times, &mut states, clock, &x)?;
                }
            }
        }
        x = sys.segment_map(u, direction * left)?.apply(&x);
        clock += direction * left;
        push_state(&mut times, &mut states, clock, &x)?;
    }
    if direction < 0.0 {
        times.reverse();
        states.reverse();
    }
    Ok(Trajectory {
        times,
        states,
        control: ctrl.clone(),
    })
}

fn push_state(
    times: &mut Vec<f64>,
    states: &mut Vec<DVector<f64>>,
    time: f64,
    x: &DVector<f64>,
) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        let last = states.last().map(|s| s.as_slice().to_vec()).unwrap_or_default();
        return Err(Error::BlowUp {
            time,
            last_state: last,
        });
    }
    times.push(time);
    states.push(x.clone());
    Ok(())
}

/// Dimension of the span of `{Z(x)}` over iterated brackets of the drift and
/// control fields up to nesting depth `max_depth`.
pub fn larc_rank(sys: &AffineSystem, x: &DVector<f64>, max_depth: usize, rank_tol: f64) -> Result<usize> {
    check_dim("evaluation point", sys.n(), x.len())?;
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let generators: Vec<AffineVectorField> = std::iter::once(sys.drift())
        .chain((0..sys.m()).map(|i| sys.control_field(i)))
        .collect();

    let mut algebra = AlgebraBasis::default();
    let mut frontier = Vec::new();
    for g in &generators {
        if algebra.insert(g) {
            frontier.push(g.clone());
        }
    }
    for _ in 1..max_depth {
        let mut next = Vec::new();
        for g in &generators {
            for z in &frontier {
                let br = lie_bracket(g, z)?;
                if algebra.insert(&br) {
                    next.push(br);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    let elements = algebra.elements;
    if elements.is_empty() {
        return Ok(0);
    }
    let evals = DMatrix::from_columns(&elements.iter().map(|z| z.eval(x)).collect::<Vec<_>>());
    Ok(rank(&evals, rank_tol))
}

/// Greedy linearly independent subset of Lie algebra elements.
#[derive(Default)]
struct AlgebraBasis {
    elements: Vec<AffineVectorField>,
    orthonormal: Vec<DVector<f64>>,
}

impl AlgebraBasis {
    fn insert(&mut self, z: &AffineVectorField) -> bool {
        let v = z.coords();
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        let mut r = v;
        // two passes of Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &self.orthonormal {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let rn = r.norm();
        if rn <= 1e-10 * scale {
            return false;
        }
        self.orthonormal.push(r / rn);
        self.elements.push(z.clone());
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_5_9() -> AffineSystem {
        AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]),
            vec![DMatrix::identity(2, 2)],
            DMatrix::from_row_slice(2, 1, &[3.0, 3.0]),
            DVector::from_vec(vec![3.0, 0.0]),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn uvec(u: f64) -> DVector<f64> {
        DVector::from_vec(vec![u])
    }

    #[test]
    fn a_of_u_examples() {
        let sys = example_5_9();
        assert_eq!(
            sys.a_of_u(&uvec(1.0)).unwrap(),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -1.0])
        );
        assert_eq!(sys.a_of_u(&uvec(0.0)).unwrap(), *sys.a());

        let s712 = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::zeros(2),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            s712.a_of_u(&uvec(0.5)).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])
        );
        assert!(matches!(
            sys.a_of_u(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn equilibria_of_example_5_9_vanish_the_field() {
        let sys = example_5_9();
        for u in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let x = DVector::from_vec(vec![-(3.0 * u + 3.0) / (2.0 + u), 3.0 * u / (2.0 - u)]);
            let f = sys.vector_field(&uvec(u), &x).unwrap();
            assert!(f.norm() < 1e-14, "u = {u}: {f}");
        }
    }

    #[test]
    fn zero_system_has_zero_field() {
        let sys = AffineSystem::new(
            DMatrix::zeros(3, 3),
            vec![DMatrix::zeros(3, 3)],
            DMatrix::zeros(3, 1),
            DVector::zeros(3),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(sys.vector_field(&uvec(0.3), &x).unwrap(), DVector::zeros(3));
        assert_eq!(larc_rank(&sys, &x, 4, DEFAULT_RANK_TOL).unwrap(), 0);
    }

    #[test]
    fn bracket_examples() {
        let x = AffineVectorField::new(
            DVector::from_vec(vec![3.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]),
        )
        .unwrap();
        let y = AffineVectorField::new(DVector::from_vec(vec![3.0, 3.0]), DMatrix::identity(2, 2)).unwrap();
        let xy = lie_bracket(&x, &y).unwrap();
        assert_eq!(xy.translation, DVector::from_vec(vec![-3.0, 6.0]));
        assert_eq!(xy.matrix, DMatrix::zeros(2, 2));
        assert_eq!(lie_bracket(&x, &x).unwrap(), AffineVectorField::zero(2));

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let lin = lie_bracket(
            &AffineVectorField::new(DVector::zeros(2), a.clone()).unwrap(),
            &AffineVectorField::new(DVector::zeros(2), b.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(lin.translation, DVector::zeros(2));
        assert_eq!(lin.matrix, -(&a * &b - &b * &a));

        assert!(lie_bracket(&x, &AffineVectorField::zero(3)).is_err());
    }

    #[test]
    fn control_range_rejects_zero_outside() {
        assert!(ControlRange::new(vec![0.5], vec![1.0]).is_err());
        assert!(ControlRange::new(vec![-1.0], vec![f64::INFINITY]).is_err());
        assert_eq!(ControlRange::symmetric(2, 1.0).unwrap().corners().len(), 4);
        assert_eq!(ControlRange::symmetric(1, 1.0).unwrap().grid(5).len(), 5);
    }

    #[test]
    fn control_validation() {
        assert!(PiecewiseControl::from_pairs(&[]).is_err());
        assert!(PiecewiseControl::from_pairs(&[(vec![0.0], 0.0)]).is_err());
        assert!(PiecewiseControl::from_pairs(&[(vec![0.0], 1.0), (vec![0.0, 1.0], 1.0)]).is_err());
        let sys = example_5_9();
        let bad = PiecewiseControl::from_pairs(&[(vec![1.5], 1.0)]).unwrap();
        assert!(matches!(simulate(&sys, &bad, &DVector::zeros(2), 1.0, &SimOptions::default()), Err(Error::InvalidControl(_))));
    }

    #[test]
    fn periodic_extension_and_pieces() {
        let ctrl = PiecewiseControl::from_pairs(&[(vec![1.0], 0.5), (vec![-1.0], 1.5)]).unwrap();
        assert_eq!(ctrl.period(), 2.0);
        assert_eq!(ctrl.value_at(0.2)[0], 1.0);
        assert_eq!(ctrl.value_at(0.7)[0], -1.0);
        assert_eq!(ctrl.value_at(4.3)[0], 1.0);
        assert_eq!(ctrl.value_at(-0.1)[0], -1.0);
        let p = ctrl.pieces(0.25, 2.75);
        let total: f64 = p.iter().map(|(_, d)| d).sum();
        assert_relative_eq!(total, 2.5, epsilon = 1e-14);
        assert_eq!(p.iter().map(|(j, _)| *j).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        assert!(ctrl.pieces(1.0, 1.0).is_empty());
    }

    #[test]
    fn scalar_decay_closed_form() {
        let sys = AffineSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            vec![DMatrix::zeros(1, 1)],
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let ctrl = PiecewiseControl::constant(uvec(1.0), 1.0).unwrap();
        let traj = simulate(&sys, &ctrl, &DVector::zeros(1), 1.0, &SimOptions::default()).unwrap();
        assert_relative_eq!(traj.endpoint()[0], 1.0 - (-1f64).exp(), epsilon = 1e-15);

        let back = simulate(&sys, &ctrl, traj.endpoint(), -1.0, &SimOptions { sample_step: Some(0.1) }).unwrap();
        assert!(back.times.windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(back.endpoint()[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let sys = example_5_9();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 1.0).unwrap();
        let x0 = DVector::from_vec(vec![-1.5, 0.0]);
        let traj = simulate(&sys, &ctrl, &x0, 3.0, &SimOptions { sample_step: Some(0.25) }).unwrap();
        assert_eq!(traj.times.len(), 13);
        for s in &traj.states {
            assert!((s - &x0).norm() < 1e-13);
        }
        let one = simulate(&sys, &ctrl, &x0, 0.0, &SimOptions::default()).unwrap();
        assert_eq!(one.states.len(), 1);
        assert_eq!(one.states[0], x0);
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = AffineSystem::new(
            DMatrix::from_element(1, 1, 800.0),
            vec![DMatrix::zeros(1, 1)],
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 1.0).unwrap();
        let err = simulate(&sys, &ctrl, &DVector::from_element(1, 1.0), 3.0, &SimOptions::default()).unwrap_err();
        match err {
            Error::BlowUp { last_state, .. } => assert!(last_state[0].is_finite()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn larc_examples() {
        let sys = example_5_9();
        assert_eq!(larc_rank(&sys, &DVector::from_vec(vec![1.0, 1.0]), 3, DEFAULT_RANK_TOL).unwrap(), 2);
        let s714 = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -3.0]),
            vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0])],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.5]),
            ControlRange::symmetric(1, 1.1).unwrap(),
        )
        .unwrap();
        assert_eq!(larc_rank(&s714, &DVector::zeros(2), 3, DEFAULT_RANK_TOL).unwrap(), 2);
        assert!(larc_rank(&sys, &DVector::zeros(2), 0, DEFAULT_RANK_TOL).is_err());
    }
}
