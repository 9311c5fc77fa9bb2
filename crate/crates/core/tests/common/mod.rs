//! Independent oracles: adaptive Dormand-Prince integration of the control
//! ODE and random test systems.
#![allow(dead_code)]

use affctl_core::system::{AffineSystem, ControlRange, PiecewiseControl, Segment};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adaptive Dormand-Prince 5(4) from `t0` to `t1` (either direction).
pub fn dopri<F>(f: F, t0: f64, t1: f64, x0: &DVector<f64>, rtol: f64, atol: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let span = t1 - t0;
    if span == 0.0 {
        return x0.clone();
    }
    let dir = span.signum();
    let mut t = t0;
    let mut x = x0.clone();
    let mut h = dir * (span.abs() / 100.0).min(0.01);
    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut xi = x.clone();
            for (j, kj) in k.iter().enumerate() {
                xi += kj * (h * A[i][j]);
            }
            k.push(f(t + C[i] * h, &xi));
        }
        let mut x5 = x.clone();
        let mut x4 = x.clone();
        for i in 0..7 {
            x5 += &k[i] * (h * B5[i]);
            x4 += &k[i] * (h * B4[i]);
        }
        let err = (&x5 - &x4)
            .iter()
            .zip(x5.iter())
            .map(|(e, v)| (e / (atol + rtol * v.abs())).powi(2))
            .sum::<f64>()
            .sqrt()
            / (x.len() as f64).sqrt();
        if err <= 1.0 {
            t += h;
            x = x5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x
}

/// Breakpoints of the periodic extension of `ctrl` on `[0, t]`, with the
/// segment value on each piece.
pub fn control_pieces(ctrl: &PiecewiseControl, t: f64) -> Vec<(f64, f64, DVector<f64>)> {
    let mut out = Vec::new();
    let mut start = 0.0;
    'outer: loop {
        for seg in ctrl.segments() {
            let end = (start + seg.duration).min(t);
            if end > start {
                out.push((start, end, seg.value.clone()));
            }
            start += seg.duration;
            if start >= t {
                break 'outer;
            }
        }
    }
    out
}

/// `x(t)` for `x' = A(u)x + Cu + d` by adaptive integration, piece by piece.
pub fn ode_solution(sys: &AffineSystem, ctrl: &PiecewiseControl, x0: &DVector<f64>, t: f64) -> DVector<f64> {
    let mut x = x0.clone();
    for (a, b, u) in control_pieces(ctrl, t) {
        let mat = sys.a() + sys.b().iter().zip(u.iter()).fold(DMatrix::zeros(sys.n(), sys.n()), |acc, (bi, ui)| acc + bi * *ui);
        let force = sys.c() * &u + sys.d();
        x = dopri(|_, y| &mat * y + &force, a, b, &x, 1e-13, 1e-14);
    }
    x
}

/// `Φ(t, 0)` of the homogeneous part by adaptive integration.
pub fn ode_principal(sys: &AffineSystem, ctrl: &PiecewiseControl, t: f64) -> DMatrix<f64> {
    let hom = sys.homogeneous_part();
    let n = sys.n();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        out.set_column(j, &ode_solution(&hom, ctrl, &e, t));
    }
    out
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn random_system(seed: u64, n: usize, m: usize) -> AffineSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AffineSystem::new(
        random_matrix(&mut rng, n, n, 1.0),
        (0..m).map(|_| random_matrix(&mut rng, n, n, 0.5)).collect(),
        random_matrix(&mut rng, n, m, 1.0),
        random_matrix(&mut rng, n, 1, 1.0).column(0).into_owned(),
        ControlRange::symmetric(m, 1.0).unwrap(),
    )
    .unwrap()
}

pub fn random_control(seed: u64, m: usize, segments: usize, period: f64) -> PiecewiseControl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights: Vec<f64> = (0..segments).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    PiecewiseControl::new(
        weights
            .iter()
            .map(|w| Segment {
                value: DVector::from_fn(m, |_, _| 2.0 * rng.random::<f64>() - 1.0),
                duration: period * w / total,
            })
            .collect(),
    )
    .unwrap()
}
