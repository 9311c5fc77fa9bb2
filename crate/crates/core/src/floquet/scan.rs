use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{classify, period_map, FloquetData, FloquetTolerances};
use crate::error::{Error, Result};
use crate::system::{larc_rank, AffineSystem, ControlRange, PiecewiseControl, Segment, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Segment values at corners of the control range.
    BangBang,
    /// Segment values uniform in the control range.
    RandomLevel,
    /// Each sample picks one of the two kinds with equal probability.
    Mixed,
}

/// Generator of periodic piecewise-constant controls. Controls listed in
/// `extra` are scanned first, then `count` seeded random samples.
#[derive(Debug, Clone)]
pub struct ControlSampler {
    pub kind: SamplerKind,
    pub period: (f64, f64),
    pub segments: (usize, usize),
    pub extra: Vec<PiecewiseControl>,
}

impl Default for ControlSampler {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Mixed,
            period: (0.5, 3.0),
            segments: (1, 4),
            extra: Vec::new(),
        }
    }
}

impl ControlSampler {
    /// The `index`-th random control for `seed`; independent of evaluation order.
    pub fn sample(&self, omega: &ControlRange, seed: u64, index: u64) -> PiecewiseControl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let (pmin, pmax) = self.period;
        let tau = if pmax > pmin { rng.random_range(pmin..=pmax) } else { pmin };
        let (kmin, kmax) = (self.segments.0.max(1), self.segments.1.max(self.segments.0.max(1)));
        let k = rng.random_range(kmin..=kmax);
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let corners = omega.corners();
        let segments = weights
            .iter()
            .map(|w| {
                let bang = match self.kind {
                    SamplerKind::BangBang => true,
                    SamplerKind::RandomLevel => false,
                    SamplerKind::Mixed => rng.random_bool(0.5),
                };
                let value = if bang {
                    corners[rng.random_range(0..corners.len())].clone()
                } else {
                    let unit: Vec<f64> = (0..omega.dim()).map(|_| rng.random::<f64>()).collect();
                    omega.from_unit(&unit)
                };
                Segment {
                    value,
                    duration: tau * w / total,
                }
            })
            .collect();
        PiecewiseControl::new(segments).expect("sampled control is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanVerdict {
    /// Some sampled control has a unit multiplier.
    Refuted,
    /// No sample had a unit multiplier. A finite scan proves nothing.
    NotRefuted,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    /// Per-sample `min_j |ρ_j - 1|`, extras first.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub argmin: usize,
    pub argmin_control: PiecewiseControl,
    pub verdict: ScanVerdict,
    /// Interior-of-semigroup proxy at the argmin control: full bracket rank at
    /// its periodic orbit's initial point. `None` when no such point exists.
    pub interior_proxy: Option<bool>,
}

pub fn hyperbolicity_scan(
    sys: &AffineSystem,
    sampler: &ControlSampler,
    count: usize,
    seed: u64,
    tol: &FloquetTolerances,
) -> Result<ScanReport> {
    let extras = sampler.extra.len();
    let total = extras + count;
    if total == 0 {
        return Err(Error::InvalidArgument("hyperbolicity scan needs at least one sample".into()));
    }
    let control_at = |i: usize| -> PiecewiseControl {
        if i < extras {
            sampler.extra[i].clone()
        } else {
            sampler.sample(sys.omega(), seed, (i - extras) as u64)
        }
    };
    let margins = (0..total)
        .into_par_iter()
        .map(|i| {
            let ctrl = control_at(i);
            let phi = period_map(sys, &ctrl)?.linear;
            Ok(FloquetData::from_monodromy(&phi, ctrl.period(), tol)?.margin)
        })
        .collect::<Result<Vec<f64>>>()?;

    let (argmin, min_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, m)| if m < best.1 { (i, m) } else { best });
    let argmin_control = control_at(argmin);
    let verdict = if min_margin <= tol.unit_tol {
        ScanVerdict::Refuted
    } else {
        ScanVerdict::NotRefuted
    };

    let map = period_map(sys, &argmin_control)?;
    let data = FloquetData::from_monodromy(&map.linear, argmin_control.period(), tol)?;
    let interior_proxy = match classify(&map, &data, tol).point() {
        Some(p) => Some(larc_rank(sys, p, 2 * sys.n(), DEFAULT_RANK_TOL)? == sys.n()),
        None => None,
    };

    Ok(ScanReport {
        margins,
        min_margin,
        argmin,
        argmin_control,
        verdict,
        interior_proxy,
    })
}
