use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{classify, period_map, unit_kernel, FloquetData, FloquetTolerances, PeriodicSolution};
use crate::error::{Error, Result};
use crate::linalg::svd_sorted;
use crate::system::{AffineSystem, PiecewiseControl};

/// Two-leg path of periodic controls from `u` (α = 0) to `v` (α = 1).
///
/// On `[0, 1/2]` the control is `u` followed by a growing prefix of `v`, ending
/// at the concatenation `u` then `v`. On `[1/2, 1]` the leading part of `u`
/// is cut away until only `v` remains.
#[derive(Debug, Clone)]
pub struct ControlPath {
    u: PiecewiseControl,
    v: PiecewiseControl,
}

pub fn concat_path(u: &PiecewiseControl, v: &PiecewiseControl) -> ControlPath {
    ControlPath {
        u: u.clone(),
        v: v.clone(),
    }
}

impl ControlPath {
    pub const JUNCTION: f64 = 0.5;

    pub fn start(&self) -> &PiecewiseControl {
        &self.u
    }

    pub fn end(&self) -> &PiecewiseControl {
        &self.v
    }

    /// `(u^α, τ_α)` for `α` clamped to `[0, 1]`.
    pub fn at(&self, alpha: f64) -> Result<(PiecewiseControl, f64)> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument("path parameter must be finite".into()));
        }
        let alpha = alpha.clamp(0.0, 1.0);
        let (sigma, tau) = (self.u.period(), self.v.period());
        let snap = 1e-14 * (sigma + tau);
        let ctrl = if alpha <= Self::JUNCTION {
            let s = 2.0 * alpha * tau;
            if s <= snap {
                self.u.clone()
            } else {
                self.u.concat(&self.v.window(0.0, s.min(tau))?)
            }
        } else {
            let s = (2.0 - 2.0 * alpha) * sigma;
            if s <= snap {
                self.v.clone()
            } else {
                let s = s.min(sigma);
                self.u.window(sigma - s, s)?.concat(&self.v)
            }
        };
        let period = ctrl.period();
        Ok((ctrl, period))
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationRecord {
    pub alpha: f64,
    pub tau: f64,
    pub control: PiecewiseControl,
    /// `det(I - Φ_{u^α}(τ_α, 0))`.
    pub det_gap: f64,
    /// `prod_j (1 + |ρ_j|)`, an upper bound for `|det_gap|`.
    pub det_scale: f64,
    pub margin: f64,
    pub solution: PeriodicSolution,
    pub norm_x: Option<f64>,
    /// Distance of `x/|x|` to the unit sphere of the (near-)unit eigenspace.
    pub kernel_angle: Option<f64>,
    /// Unit vector spanning the near-unit eigenspace (its first basis vector).
    pub kernel_direction: Option<DVector<f64>>,
    /// The record was added by bisection towards a crossing.
    pub refined: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    pub steps: usize,
    /// Bisection steps spent on each detected crossing interval.
    pub refine_depth: usize,
    /// Records added on each side of a crossing at distances `h/2^k`,
    /// `k = 1..=approach_steps`, with `h` the mesh width.
    pub approach_steps: usize,
    pub tol: FloquetTolerances,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            steps: 101,
            refine_depth: 40,
            approach_steps: 12,
            tol: FloquetTolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationRun {
    /// Sorted by `alpha`.
    pub records: Vec<ContinuationRecord>,
    /// Final `[lo, hi]` brackets around each crossing.
    pub crossings: Vec<(f64, f64)>,
}

impl ContinuationRun {
    /// Records with `|x^α|` at least `floor`, in order of increasing norm.
    pub fn blow_up(&self, floor: f64) -> Vec<&ContinuationRecord> {
        let mut out: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.norm_x.is_some_and(|n| n >= floor))
            .collect();
        out.sort_by(|a, b| a.norm_x.unwrap().total_cmp(&b.norm_x.unwrap()));
        out
    }
}

pub fn continuation(sys: &AffineSystem, path: &ControlPath, opts: &ContinuationOptions) -> Result<ContinuationRun> {
    if opts.steps < 2 {
        return Err(Error::InvalidArgument("continuation needs at least 2 steps".into()));
    }
    let mesh: Vec<f64> = (0..opts.steps).map(|i| i as f64 / (opts.steps - 1) as f64).collect();
    let mut records = mesh
        .par_iter()
        .map(|&a| record_at(sys, path, a, &opts.tol, false))
        .collect::<Result<Vec<_>>>()?;

    let mut crossings = Vec::new();
    let mut refined = Vec::new();
    for w in records.windows(2) {
        let (left, right) = (&w[0], &w[1]);
        let small = |r: &ContinuationRecord| r.det_gap.abs() < opts.tol.cross_tol * r.det_scale;
        if small(left) {
            crossings.push((left.alpha, left.alpha));
            continue;
        }
        if left.det_gap.signum() != right.det_gap.signum() && !small(right) {
            let (mut lo, mut hi) = (left.alpha, right.alpha);
            let lo_sign = left.det_gap.signum();
            for _ in 0..opts.refine_depth {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let rec = record_at(sys, path, mid, &opts.tol, true)?;
                let sign = rec.det_gap.signum();
                let tiny = small(&rec);
                refined.push(rec);
                if tiny {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if sign == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossings.push((lo, hi));
        }
    }
    if let Some(last) = records.last() {
        if last.det_gap.abs() < opts.tol.cross_tol * last.det_scale {
            crossings.push((last.alpha, last.alpha));
        }
    }
    let h = 1.0 / (opts.steps - 1) as f64;
    let approach: Vec<f64> = crossings
        .iter()
        .flat_map(|&(lo, hi)| {
            let c = 0.5 * (lo + hi);
            (1..=opts.approach_steps).flat_map(move |k| {
                let d = h * 0.5f64.powi(k as i32);
                [c - d, c + d]
            })
        })
        .filter(|a| (0.0..=1.0).contains(a))
        .collect();
    let approached = approach
        .par_iter()
        .map(|&a| record_at(sys, path, a, &opts.tol, true))
        .collect::<Result<Vec<_>>>()?;
    records.extend(refined);
    records.extend(approached);
    records.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(ContinuationRun { records, crossings })
}

fn record_at(
    sys: &AffineSystem,
    path: &ControlPath,
    alpha: f64,
    tol: &FloquetTolerances,
    refined: bool,
) -> Result<ContinuationRecord> {
    let (control, tau) = path.at(alpha)?;
    let map = period_map(sys, &control)?;
    let n = sys.n();
    let det_gap = (DMatrix::identity(n, n) - &map.linear).determinant();
    let data = FloquetData::from_monodromy(&map.linear, tau, tol)?;
    let det_scale = data.multipliers.iter().map(|r| 1.0 + r.norm()).product();
    let solution = classify(&map, &data, tol);
    let norm_x = solution.point().map(|x| x.norm());

    let (kernel_angle, kernel_direction) = if data.margin < tol.near_unit_tol {
        let basis = near_unit_basis(&map.linear, &data, tol);
        let angle = solution
            .point()
            .filter(|x| x.norm() > 0.0)
            .map(|x| sphere_distance(&(x / x.norm()), &basis));
        (angle, basis.first().cloned())
    } else {
        (None, None)
    };

    Ok(ContinuationRecord {
        alpha,
        tau,
        control,
        det_gap,
        det_scale,
        margin: data.margin,
        solution,
        norm_x,
        kernel_angle,
        kernel_direction,
        refined,
    })
}

/// `E(Φ;1)` when a unit multiplier is present, otherwise the singular
/// direction of `Φ - I` with the smallest singular value.
fn near_unit_basis(phi: &DMatrix<f64>, data: &FloquetData, tol: &FloquetTolerances) -> Vec<DVector<f64>> {
    if data.unit_multiplier {
        return unit_kernel(phi, tol).0;
    }
    let n = phi.nrows();
    let (_, vectors) = svd_sorted(&(phi - DMatrix::identity(n, n)));
    vec![vectors.column(n - 1).into_owned()]
}

/// Distance from the unit vector `x` to the unit sphere of `span(basis)`
/// (orthonormal basis).
pub(crate) fn sphere_distance(x: &DVector<f64>, basis: &[DVector<f64>]) -> f64 {
    let mut proj = DVector::zeros(x.len());
    for b in basis {
        proj += b * b.dot(x);
    }
    let pn = proj.norm();
    if pn == 0.0 {
        return std::f64::consts::SQRT_2;
    }
    (x - proj / pn).norm()
}
