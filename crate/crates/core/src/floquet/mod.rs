//! Monodromy matrices, Floquet multipliers and periodic solutions of
//! `x' = A(u(t)) x + C u(t) + d` for periodic piecewise-constant `u`.

mod path;
mod perturb;
mod scan;

pub use path::{concat_path, continuation, ContinuationOptions, ContinuationRecord, ContinuationRun, ControlPath};
pub use perturb::{coefficient_l1_gap, gronwall_envelope, l1_distance, sup_principal_gap, PrincipalSampler};
pub use scan::{hyperbolicity_scan, ControlSampler, SamplerKind, ScanReport, ScanVerdict};

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, expm, spectral_norm, svd_sorted, truncated_lstsq};
use crate::system::{AffineMap, AffineSystem, PiecewiseControl};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetTolerances {
    /// Distance of a multiplier to 1 below which it counts as a unit multiplier.
    pub unit_tol: f64,
    /// Residual cutoff separating affine families from obstructed cases.
    pub res_tol: f64,
    /// `|det(I - Φ)|` below this (times the determinant scale) marks a crossing.
    pub cross_tol: f64,
    /// Kernel directions are reported when a multiplier is this close to 1.
    pub near_unit_tol: f64,
}

impl Default for FloquetTolerances {
    fn default() -> Self {
        Self {
            unit_tol: 1e-8,
            res_tol: 1e-8,
            cross_tol: 1e-10,
            near_unit_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Monodromy {
    /// `Φ_u(τ, 0)`.
    pub phi: DMatrix<f64>,
    pub tau: f64,
    pub control: PiecewiseControl,
}

#[derive(Debug, Clone)]
pub struct FloquetData {
    /// Sorted by modulus, descending.
    pub multipliers: Vec<Complex64>,
    /// `(1/τ) log|ρ_j|`, descending.
    pub exponents: Vec<f64>,
    pub unit_multiplier: bool,
    /// Orthonormal basis of `E(Φ; 1)`; empty when `unit_multiplier` is false.
    pub unit_eigenspace: Vec<DVector<f64>>,
    /// `min_j |ρ_j - 1|`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodicSolution {
    Unique { x0: DVector<f64> },
    AffineFamily { y0: DVector<f64>, basis: Vec<DVector<f64>> },
    Obstructed { residual: f64 },
}

impl PeriodicSolution {
    /// Representative initial value: `x0` or the minimum-norm `y0`.
    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            PeriodicSolution::Unique { x0 } => Some(x0),
            PeriodicSolution::AffineFamily { y0, .. } => Some(y0),
            PeriodicSolution::Obstructed { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PeriodicSolution::Unique { .. } => "unique",
            PeriodicSolution::AffineFamily { .. } => "affine_family",
            PeriodicSolution::Obstructed { .. } => "obstructed",
        }
    }
}

/// Flow map over one period: linear part `Φ_u(τ,0)`, offset
/// `∫_0^τ Φ_u(τ,s)(C u(s) + d) ds`.
pub fn period_map(sys: &AffineSystem, ctrl: &PiecewiseControl) -> Result<AffineMap> {
    sys.check_control(ctrl)?;
    let mut map = AffineMap::identity(sys.n());
    for seg in ctrl.segments() {
        map = map.then(&sys.segment_map(&seg.value, seg.duration)?);
    }
    Ok(map)
}

/// `Φ_u(t, s)` for the periodic extension of `ctrl`.
pub fn principal_matrix(sys: &AffineSystem, ctrl: &PiecewiseControl, t: f64, s: f64) -> Result<DMatrix<f64>> {
    sys.check_control(ctrl)?;
    if t < s {
        let forward = principal_matrix(sys, ctrl, s, t)?;
        return forward
            .clone()
            .try_inverse()
            .ok_or(Error::EigenFailure {
                condition: condition_number(&forward),
            });
    }
    let n = sys.n();
    let mut phi = DMatrix::identity(n, n);
    for (j, len) in ctrl.pieces(s, t) {
        let a_u = sys.a_of_u(&ctrl.segments()[j].value)?;
        phi = expm(&(a_u * len)) * phi;
    }
    Ok(phi)
}

pub fn forced_integral(sys: &AffineSystem, ctrl: &PiecewiseControl) -> Result<DVector<f64>> {
    Ok(period_map(sys, ctrl)?.offset)
}

pub fn floquet_of(
    sys: &AffineSystem,
    ctrl: &PiecewiseControl,
    tol: &FloquetTolerances,
) -> Result<(Monodromy, FloquetData)> {
    let phi = period_map(sys, ctrl)?.linear;
    let data = FloquetData::from_monodromy(&phi, ctrl.period(), tol)?;
    Ok((
        Monodromy {
            phi,
            tau: ctrl.period(),
            control: ctrl.clone(),
        },
        data,
    ))
}

impl FloquetData {
    pub fn from_monodromy(phi: &DMatrix<f64>, tau: f64, tol: &FloquetTolerances) -> Result<Self> {
        let mut multipliers = eigenvalues(phi)?;
        multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let exponents = multipliers.iter().map(|r| r.norm().ln() / tau).collect();
        let margin = multipliers
            .iter()
            .map(|r| (r - Complex64::new(1.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        let unit_multiplier = margin <= tol.unit_tol;
        let unit_eigenspace = if unit_multiplier {
            unit_kernel(phi, tol).0
        } else {
            Vec::new()
        };
        Ok(Self {
            multipliers,
            exponents,
            unit_multiplier,
            unit_eigenspace,
            margin,
        })
    }
}

pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure {
            condition: f64::INFINITY,
        });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or_else(|| Error::EigenFailure {
        condition: condition_number(m),
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Real eigenspace `ker(Φ - I)` with a singular-value cutoff, and the cutoff
/// used. When `Φ` has a unit multiplier but no singular value of `Φ - I`
/// falls under the cutoff, the smallest singular direction is used.
pub(crate) fn unit_kernel(phi: &DMatrix<f64>, tol: &FloquetTolerances) -> (Vec<DVector<f64>>, f64) {
    let n = phi.nrows();
    let gap = phi - DMatrix::identity(n, n);
    let (values, vectors) = svd_sorted(&gap);
    let mut cutoff = tol.unit_tol * spectral_norm(phi).max(1.0);
    let smallest = values.last().copied().unwrap_or(0.0);
    if smallest > cutoff {
        cutoff = smallest * (1.0 + 1e-12);
    }
    let basis = values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(i, _)| vectors.column(i).into_owned())
        .collect();
    (basis, cutoff)
}

/// Periodic-solution trichotomy for the τ-periodic control `ctrl`.
pub fn periodic_solution(
    sys: &AffineSystem,
    ctrl: &PiecewiseControl,
    tol: &FloquetTolerances,
) -> Result<PeriodicSolution> {
    let map = period_map(sys, ctrl)?;
    let data = FloquetData::from_monodromy(&map.linear, ctrl.period(), tol)?;
    Ok(classify(&map, &data, tol))
}

pub(crate) fn classify(map: &AffineMap, data: &FloquetData, tol: &FloquetTolerances) -> PeriodicSolution {
    let n = map.linear.nrows();
    let gap = DMatrix::identity(n, n) - &map.linear;
    let b = &map.offset;
    if data.margin > tol.unit_tol {
        if let Some(x0) = gap.clone().lu().solve(b) {
            if x0.iter().all(|v| v.is_finite()) {
                return PeriodicSolution::Unique { x0 };
            }
        }
    }
    let (basis, cutoff) = unit_kernel(&map.linear, tol);
    let (y0, residual) = truncated_lstsq(&gap, b, cutoff);
    if residual <= tol.res_tol * (1.0 + b.norm()) {
        PeriodicSolution::AffineFamily { y0, basis }
    } else {
        PeriodicSolution::Obstructed { residual }
    }
}

/// Control value in `[lo, hi]` where the `index`-th eigenvalue (sorted by real
/// part, descending) of `A(u)` crosses zero, for a single-input system.
/// Found by bisection on the eigen-solver output; `None` without a sign change.
pub fn eigenvalue_zero_crossing(sys: &AffineSystem, index: usize, lo: f64, hi: f64) -> Result<Option<f64>> {
    if sys.m() != 1 {
        return Err(Error::InvalidArgument("zero crossing needs a single-input system".into()));
    }
    let real_part = |u: f64| -> Result<f64> {
        let mut eig = eigenvalues(&sys.a_of_u(&DVector::from_element(1, u))?)?;
        eig.sort_by(|a, b| b.re.total_cmp(&a.re));
        eig.get(index).map(|e| e.re).ok_or(Error::DimensionMismatch {
            what: "eigenvalue index",
            expected: sys.n(),
            got: index,
        })
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (real_part(a)?, real_part(b)?);
    if fa == 0.0 {
        return Ok(Some(a));
    }
    if fb == 0.0 {
        return Ok(Some(b));
    }
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = real_part(mid)?;
        if fm == 0.0 {
            return Ok(Some(mid));
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ControlRange;
    use approx::assert_relative_eq;

    fn uvec(u: f64) -> DVector<f64> {
        DVector::from_element(1, u)
    }

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

    fn example_7_14(d: f64) -> AffineSystem {
        AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -3.0]),
            vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0])],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::from_vec(vec![0.0, d]),
            ControlRange::symmetric(1, 1.1).unwrap(),
        )
        .unwrap()
    }

    fn scalar_decay() -> AffineSystem {
        AffineSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            vec![DMatrix::zeros(1, 1)],
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn principal_matrix_examples() {
        let sys = example_5_9();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 1.0).unwrap();
        let phi = principal_matrix(&sys, &ctrl, 1.0, 0.0).unwrap();
        assert_relative_eq!(phi[(0, 0)], 2f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(phi[(1, 1)], (-2f64).exp(), max_relative = 1e-14);

        let two = PiecewiseControl::from_pairs(&[(vec![1.0], 0.3), (vec![-0.5], 0.9)]).unwrap();
        let expected = expm(&(sys.a_of_u(&uvec(-0.5)).unwrap() * 0.9)) * expm(&(sys.a_of_u(&uvec(1.0)).unwrap() * 0.3));
        let got = principal_matrix(&sys, &two, 1.2, 0.0).unwrap();
        assert!((got - expected).norm() < 1e-13);

        let inv = principal_matrix(&sys, &two, 0.0, 1.2).unwrap();
        let fwd = principal_matrix(&sys, &two, 1.2, 0.0).unwrap();
        assert!((inv * fwd - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn trivial_system_has_unit_multipliers() {
        let sys = AffineSystem::new(
            DMatrix::zeros(3, 3),
            vec![DMatrix::zeros(3, 3)],
            DMatrix::zeros(3, 1),
            DVector::zeros(3),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let ctrl = PiecewiseControl::from_pairs(&[(vec![0.4], 0.5), (vec![-1.0], 1.0)]).unwrap();
        let (_, data) = floquet_of(&sys, &ctrl, &FloquetTolerances::default()).unwrap();
        assert!(data.unit_multiplier);
        assert_eq!(data.unit_eigenspace.len(), 3);
        assert!(data.exponents.iter().all(|e| e.abs() < 1e-15));
        match periodic_solution(&sys, &ctrl, &FloquetTolerances::default()).unwrap() {
            PeriodicSolution::AffineFamily { y0, basis } => {
                assert!(y0.norm() < 1e-15);
                assert_eq!(basis.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(forced_integral(&sys, &ctrl).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn example_7_14_unit_multiplier() {
        let sys = example_7_14(0.5);
        let ctrl = PiecewiseControl::constant(uvec(-1.0), 1.0).unwrap();
        let (mono, data) = floquet_of(&sys, &ctrl, &FloquetTolerances::default()).unwrap();
        assert_eq!(mono.tau, 1.0);
        assert_relative_eq!(data.multipliers[0].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(data.multipliers[1].re, (-3f64).exp(), epsilon = 1e-14);
        assert!(data.exponents[0].abs() < 1e-13);
        assert_relative_eq!(data.exponents[1], -3.0, epsilon = 1e-12);
        assert!(data.unit_multiplier);
        assert_eq!(data.unit_eigenspace.len(), 1);
        let v = &data.unit_eigenspace[0];
        assert_relative_eq!(v[0].abs(), 1.0, epsilon = 1e-12);
        assert!(v[1].abs() < 1e-12);
    }

    #[test]
    fn example_5_9_margin() {
        let sys = example_5_9();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 1.0).unwrap();
        let (_, data) = floquet_of(&sys, &ctrl, &FloquetTolerances::default()).unwrap();
        assert_relative_eq!(data.multipliers[0].re, 2f64.exp(), max_relative = 1e-13);
        assert_relative_eq!(data.multipliers[1].re, (-2f64).exp(), max_relative = 1e-13);
        let expected = (2f64.exp() - 1.0).min(1.0 - (-2f64).exp());
        assert_relative_eq!(data.margin, expected, max_relative = 1e-12);
        assert!(!data.unit_multiplier && data.unit_eigenspace.is_empty());
    }

    #[test]
    fn forced_integral_closed_forms() {
        let sys = scalar_decay();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 2f64.ln()).unwrap();
        assert_relative_eq!(forced_integral(&sys, &ctrl).unwrap()[0], 0.5, epsilon = 1e-15);

        let d = 0.5;
        let sys = example_7_14(d);
        let ctrl = PiecewiseControl::constant(uvec(-1.0), 1.0).unwrap();
        let q = 1.0 - (-3f64).exp();
        let c = d - 1.0;
        let b = forced_integral(&sys, &ctrl).unwrap();
        assert_relative_eq!(b[0], c / 3.0 * (1.0 - q / 3.0), epsilon = 1e-14);
        assert_relative_eq!(b[1], c * q / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn trichotomy_examples() {
        let tol = FloquetTolerances::default();
        for tau in [0.1, 1.0, 7.5] {
            let ctrl = PiecewiseControl::constant(uvec(0.0), tau).unwrap();
            match periodic_solution(&scalar_decay(), &ctrl, &tol).unwrap() {
                PeriodicSolution::Unique { x0 } => assert_relative_eq!(x0[0], 1.0, epsilon = 1e-12),
                other => panic!("unexpected {other:?}"),
            }
        }
        let ctrl = PiecewiseControl::constant(uvec(-1.0), 1.0).unwrap();
        for d in [0.0, 0.5] {
            match periodic_solution(&example_7_14(d), &ctrl, &tol).unwrap() {
                PeriodicSolution::Obstructed { residual } => assert!(residual > tol.res_tol),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn affine_family_when_forcing_is_in_the_image() {
        // x' = 0*x + 0, y' = -y + 1: x direction neutral, forcing in image.
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]),
            vec![DMatrix::zeros(2, 2)],
            DMatrix::zeros(2, 1),
            DVector::from_vec(vec![0.0, 1.0]),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let ctrl = PiecewiseControl::constant(uvec(0.0), 1.3).unwrap();
        match periodic_solution(&sys, &ctrl, &FloquetTolerances::default()).unwrap() {
            PeriodicSolution::AffineFamily { y0, basis } => {
                assert_relative_eq!(y0[1], 1.0, epsilon = 1e-12);
                assert!(y0[0].abs() < 1e-12);
                assert_eq!(basis.len(), 1);
                assert_relative_eq!(basis[0][0].abs(), 1.0, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_crossing_of_example_7_13() {
        let eps = 0.05;
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0 + eps])],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::zeros(2),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let u1 = eigenvalue_zero_crossing(&sys, 0, -1.0, 0.0).unwrap().unwrap();
        assert_relative_eq!(u1, -1.0 / (4.0 + 2.0 * eps).sqrt(), epsilon = 1e-12);
        assert!(eigenvalue_zero_crossing(&sys, 0, 0.0, 1.0).unwrap().is_none());
    }
}
