//! Quantities for continuous dependence of principal fundamental solutions
//! on the control: L¹ gaps, sampled sup-gaps and a Gronwall-type envelope.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{expm, spectral_norm};
use crate::system::{AffineSystem, PiecewiseControl};

/// Merged breakpoints of both controls' periodic extensions on `[0, horizon]`.
fn breakpoints(u: &PiecewiseControl, v: &PiecewiseControl, horizon: f64) -> Vec<f64> {
    let mut pts = vec![0.0, horizon];
    for ctrl in [u, v] {
        let mut t = 0.0;
        'outer: loop {
            for seg in ctrl.segments() {
                t += seg.duration;
                if t >= horizon {
                    break 'outer;
                }
                pts.push(t);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * horizon.max(1.0));
    pts
}

/// `∫_0^horizon |u(t) - v(t)|_1 dt` for the periodic extensions.
pub fn l1_distance(u: &PiecewiseControl, v: &PiecewiseControl, horizon: f64) -> f64 {
    breakpoints(u, v, horizon)
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (u.value_at(mid) - v.value_at(mid)).lp_norm(1) * (w[1] - w[0])
        })
        .sum()
}

/// `∫_0^horizon |A(u(t)) - A(v(t))|_2 dt`.
pub fn coefficient_l1_gap(sys: &AffineSystem, u: &PiecewiseControl, v: &PiecewiseControl, horizon: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in breakpoints(u, v, horizon).windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let diff = sys.a_of_u(u.value_at(mid))? - sys.a_of_u(v.value_at(mid))?;
        total += spectral_norm(&diff) * (w[1] - w[0]);
    }
    Ok(total)
}

fn coefficient_l1_norm(sys: &AffineSystem, u: &PiecewiseControl, horizon: f64) -> Result<f64> {
    let mut total = 0.0;
    for w in breakpoints(u, u, horizon).windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        total += spectral_norm(&sys.a_of_u(u.value_at(mid))?) * (w[1] - w[0]);
    }
    Ok(total)
}

/// Principal matrices `Φ(t_i, 0)` on a uniform grid of `[0, horizon]`, from
/// which `Φ(t_i, t_j) = Φ(t_i, 0) Φ(t_j, 0)^{-1}`.
pub struct PrincipalSampler {
    pub times: Vec<f64>,
    from_zero: Vec<DMatrix<f64>>,
    inverses: Vec<DMatrix<f64>>,
}

impl PrincipalSampler {
    pub fn new(sys: &AffineSystem, ctrl: &PiecewiseControl, horizon: f64, points: usize) -> Result<Self> {
        sys.check_control(ctrl)?;
        if points < 2 || !(horizon > 0.0) {
            return Err(Error::InvalidArgument("sampler needs horizon > 0 and at least 2 points".into()));
        }
        let n = sys.n();
        let times: Vec<f64> = (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect();
        let mut from_zero = Vec::with_capacity(points);
        let mut inverses = Vec::with_capacity(points);
        let mut phi = DMatrix::identity(n, n);
        let mut inv = DMatrix::identity(n, n);
        let mut prev = 0.0;
        for &t in &times {
            for (j, len) in ctrl.pieces(prev, t) {
                let a_u = sys.a_of_u(&ctrl.segments()[j].value)?;
                phi = expm(&(&a_u * len)) * phi;
                inv = &inv * expm(&(&a_u * -len));
            }
            prev = t;
            from_zero.push(phi.clone());
            inverses.push(inv.clone());
        }
        Ok(Self {
            times,
            from_zero,
            inverses,
        })
    }

    /// `Φ(t_i, t_j)`.
    pub fn get(&self, i: usize, j: usize) -> DMatrix<f64> {
        &self.from_zero[i] * &self.inverses[j]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `max_{i,j} |Φ_u(t_i,t_j) - Φ_v(t_i,t_j)|_2` over a uniform grid of
/// `points` times in `[0, horizon]`.
pub fn sup_principal_gap(
    sys: &AffineSystem,
    u: &PiecewiseControl,
    v: &PiecewiseControl,
    horizon: f64,
    points: usize,
) -> Result<f64> {
    let pu = PrincipalSampler::new(sys, u, horizon, points)?;
    let pv = PrincipalSampler::new(sys, v, horizon, points)?;
    let mut sup: f64 = 0.0;
    for i in 0..points {
        for j in 0..points {
            sup = sup.max(spectral_norm(&(pu.get(i, j) - pv.get(i, j))));
        }
    }
    Ok(sup)
}

/// Upper bound `c_k exp(∫|P⁰|)` for `sup |Φ^k(t,s) - Φ⁰(t,s)|` on
/// `[0, horizon]`, with `c_k = c_1 ∫|P^k - P⁰|` and
/// `c_1 = exp(∫|P^k|) >= sup |Φ^k(t,s)|`.
pub fn gronwall_envelope(
    sys: &AffineSystem,
    base: &PiecewiseControl,
    perturbed: &PiecewiseControl,
    horizon: f64,
) -> Result<f64> {
    let c1 = coefficient_l1_norm(sys, perturbed, horizon)?.exp();
    let ck = c1 * coefficient_l1_gap(sys, base, perturbed, horizon)?;
    Ok(ck * coefficient_l1_norm(sys, base, horizon)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ControlRange;
    use nalgebra::DVector;

    #[test]
    fn l1_distance_of_shifted_levels() {
        let u = PiecewiseControl::from_pairs(&[(vec![1.0], 1.0)]).unwrap();
        let v = PiecewiseControl::from_pairs(&[(vec![1.0], 0.75), (vec![0.0], 0.25)]).unwrap();
        // gap of 0.25 per period, horizon covers two periods
        assert!((l1_distance(&u, &v, 2.0) - 0.5).abs() < 1e-14);
        assert!((l1_distance(&u, &v, 1.5) - 0.25).abs() < 1e-14);
        assert_eq!(l1_distance(&u, &u, 3.0), 0.0);
    }

    #[test]
    fn identical_controls_have_zero_gap() {
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            vec![DMatrix::identity(2, 2)],
            DMatrix::zeros(2, 1),
            DVector::zeros(2),
            ControlRange::symmetric(1, 1.0).unwrap(),
        )
        .unwrap();
        let u = PiecewiseControl::from_pairs(&[(vec![0.5], 0.3), (vec![-0.2], 0.8)]).unwrap();
        assert!(sup_principal_gap(&sys, &u, &u, 2.1, 15).unwrap() < 1e-13);
        assert_eq!(gronwall_envelope(&sys, &u, &u, 2.1).unwrap(), 0.0);
        let s = PrincipalSampler::new(&sys, &u, 2.1, 8).unwrap();
        assert!((s.get(3, 3) - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
