//! Worked example systems.

use nalgebra::{DMatrix, DVector};

use crate::system::{AffineSystem, ControlRange};

fn build(a: &[f64], b: &[f64], c: &[f64], d: &[f64], rho: f64) -> AffineSystem {
    AffineSystem::new(
        DMatrix::from_row_slice(2, 2, a),
        vec![DMatrix::from_row_slice(2, 2, b)],
        DMatrix::from_row_slice(2, 1, c),
        DVector::from_row_slice(d),
        ControlRange::symmetric(1, rho).expect("rho is finite"),
    )
    .expect("catalog systems are consistent")
}

/// `A = diag(2,-2)`, `B = I`, `C = (3,3)`, `d = (3,0)`, `u in [-1,1]`.
/// Uniformly hyperbolic, control set `(-2,0) x [-1,3]`.
pub fn example_5_9() -> AffineSystem {
    build(&[2.0, 0.0, 0.0, -2.0], &[1.0, 0.0, 0.0, 1.0], &[3.0, 3.0], &[3.0, 0.0], 1.0)
}

/// Equilibrium of [`example_5_9`]: `(-3(u+1)/(u+2), 3u/(2-u))`.
pub fn example_5_9_equilibrium(u: f64) -> DVector<f64> {
    DVector::from_vec(vec![-3.0 * (u + 1.0) / (u + 2.0), 3.0 * u / (2.0 - u)])
}

/// `A(u) = [[2u, 1], [1, 2u]]`, `C = (0,1)`, `u in [-1,1]`.
pub fn example_7_12() -> AffineSystem {
    build(&[0.0, 1.0, 1.0, 0.0], &[2.0, 0.0, 0.0, 2.0], &[0.0, 1.0], &[0.0, 0.0], 1.0)
}

/// Equilibrium of [`example_7_12`] for `|u| != 1/2`: `(u, -2u^2)/(4u^2-1)`.
pub fn example_7_12_equilibrium(u: f64) -> DVector<f64> {
    DVector::from_vec(vec![u, -2.0 * u * u]) / (4.0 * u * u - 1.0)
}

/// `A(u) = [[2u, 1], [1, (2+eps)u]]`, `C = (0,1)`, `u in [-1,1]`.
pub fn example_7_13(eps: f64) -> AffineSystem {
    build(&[0.0, 1.0, 1.0, 0.0], &[2.0, 0.0, 0.0, 2.0 + eps], &[0.0, 1.0], &[0.0, 0.0], 1.0)
}

/// Closed-form eigenvalues `(λ1, λ2)` of [`example_7_13`] at `u`.
pub fn example_7_13_eigenvalues(u: f64, eps: f64) -> (f64, f64) {
    let mean = 0.5 * u * (4.0 + eps);
    let half = 0.5 * (4.0 + u * u * ((4.0 + eps).powi(2) - 4.0 * (4.0 + 2.0 * eps))).sqrt();
    (mean + half, mean - half)
}

/// `A(u) = [[0, 1], [-1-u, -3]]`, `C = (0,1)`, `d = (0,d)`, `u in [-rho, rho]`.
pub fn example_7_14(rho: f64, d: f64) -> AffineSystem {
    build(&[0.0, 1.0, -1.0, -3.0], &[0.0, 0.0, -1.0, 0.0], &[0.0, 1.0], &[0.0, d], rho)
}

/// Equilibrium `((u+d)/(1+u), 0)` of [`example_7_14`] for `u != -1`.
pub fn example_7_14_equilibrium(u: f64, d: f64) -> DVector<f64> {
    DVector::from_vec(vec![(u + d) / (1.0 + u), 0.0])
}

/// `x' = diag(0,-1) x + (1,1) u`, `u in [-1,1]`.
pub fn linear_center() -> AffineSystem {
    build(&[0.0, 0.0, 0.0, -1.0], &[0.0; 4], &[1.0, 1.0], &[0.0, 0.0], 1.0)
}
