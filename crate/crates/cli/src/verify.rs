//! Bundled scenarios for the worked examples. Each check reports a verdict
//! and the measured quantity it was decided on.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::Instant;

use affctl_core::catalog;
use affctl_core::floquet::{
    concat_path, continuation, eigenvalue_zero_crossing, floquet_of, hyperbolicity_scan, periodic_solution,
    ContinuationOptions, ControlSampler, PeriodicSolution, ScanVerdict,
};
use affctl_core::projective::{
    embed_system, infinity_boundary_chain, infinity_boundary_directions, proj_metric, ChainInfinityAnalysis,
    DirectionOptions, ProjPoint, SphereGridParams,
};
use affctl_core::reach::{build_transition_graph, control_set_approx, BoxGrid, BoxSet};
use affctl_core::system::{AffineSystem, PiecewiseControl};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::system_file::SystemFile;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn uvec(u: f64) -> DVector<f64> {
    DVector::from_element(1, u)
}

fn constant(u: f64, period: f64) -> PiecewiseControl {
    PiecewiseControl::constant(uvec(u), period).expect("positive period")
}

fn point(coords: &[f64]) -> ProjPoint {
    ProjPoint::new(DVector::from_row_slice(coords)).expect("nonzero")
}

fn grid_of(file: &SystemFile) -> CliResult<BoxGrid> {
    file.box_grid()
        .ok_or_else(|| CliError::Usage("the system file has no [grid] section".into()))
}

/// Control set of the box containing `seed`.
pub fn control_set_at(sys: &AffineSystem, file: &SystemFile, seed: &DVector<f64>) -> CliResult<(BoxGrid, BoxSet)> {
    let grid = grid_of(file)?;
    let graph = build_transition_graph(sys, &grid, &file.sampling_params())?;
    let idx = grid
        .locate(seed)
        .ok_or_else(|| CliError::Usage(format!("seed point {:?} is outside the window", seed.as_slice())))?;
    let set = control_set_approx(&graph, idx)?;
    Ok((grid, set))
}

/// Area of the symmetric difference between the union of boxes in `set` and
/// the rectangle `[lo, hi]`.
pub fn symmetric_difference_area(grid: &BoxGrid, set: &BoxSet, lo: &[f64], hi: &[f64]) -> f64 {
    let ext = grid.extent();
    let mut inside = 0.0;
    for &i in set.indices() {
        let c = grid.center(i);
        let mut vol = 1.0;
        for k in 0..grid.dim() {
            let a = (c[k] - 0.5 * ext[k]).max(lo[k]);
            let b = (c[k] + 0.5 * ext[k]).min(hi[k]);
            vol *= (b - a).max(0.0);
        }
        inside += vol;
    }
    let rect: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).product();
    set.len() as f64 * grid.box_volume() + rect - 2.0 * inside
}

/// Components of the chain analysis met by the `P^n` images of the centers of `set`.
pub fn components_met(analysis: &ChainInfinityAnalysis, grid: &BoxGrid, set: &BoxSet) -> Vec<usize> {
    let mut out: Vec<usize> = set
        .indices()
        .iter()
        .filter_map(|&i| ProjPoint::of_state(&grid.center(i)).ok())
        .filter_map(|p| analysis.component_of(&p))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn run(id: &str, file: &SystemFile) -> CliResult<Vec<Check>> {
    match id {
        "5.9" => example_5_9(file),
        "7.12" => example_7_12(file),
        "7.13" => example_7_13(file),
        "7.14" => example_7_14(file),
        other => Err(CliError::Usage(format!("unknown example {other}"))),
    }
}

fn example_5_9(file: &SystemFile) -> CliResult<Vec<Check>> {
    let sys = file.to_system();
    let mut checks = Vec::new();

    let start = Instant::now();
    let (grid, set) = control_set_at(&sys, file, &catalog::example_5_9_equilibrium(0.0))?;
    let elapsed = start.elapsed().as_secs_f64();
    let rel = symmetric_difference_area(&grid, &set, &[-2.0, -1.0], &[0.0, 3.0]) / 8.0;
    checks.push(Check::new(
        "control set",
        rel <= 0.10,
        format!("{} boxes, symmetric difference {:.2}% of (-2,0)x[-1,3]", set.len(), 100.0 * rel),
    ));
    checks.push(Check::new("runtime", elapsed <= 60.0, format!("{elapsed:.2} s")));

    let mut worst: f64 = 0.0;
    for u in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let expected = DVector::from_vec(vec![-3.0 * (u + 1.0) / (u + 2.0), 3.0 * u / (2.0 - u)]);
        worst = match sys.equilibrium(&uvec(u))? {
            Some(x) => worst.max((x - expected).amax()),
            None => f64::INFINITY,
        };
    }
    checks.push(Check::new("equilibria", worst <= 1e-12, format!("max deviation {worst:.1e}")));

    let sampler = ControlSampler::default();
    let tol = file.floquet_tolerances();
    let scan = hyperbolicity_scan(&sys, &sampler, 1000, file.sampling.seed, &tol)?;
    let bound = 1.0 - (-sampler.period.0).exp();
    checks.push(Check::new(
        "hyperbolicity scan",
        scan.verdict == ScanVerdict::NotRefuted && scan.min_margin >= bound - 1e-12,
        format!("{:?}, min margin {:.6} (bound {bound:.6})", scan.verdict, scan.min_margin),
    ));
    Ok(checks)
}

fn example_7_12(file: &SystemFile) -> CliResult<Vec<Check>> {
    let sys = file.to_system();
    let tol = file.floquet_tolerances();
    let mut checks = Vec::new();

    let sampler = ControlSampler {
        extra: vec![constant(-0.5, 1.0)],
        ..ControlSampler::default()
    };
    let scan = hyperbolicity_scan(&sys, &sampler, 200, file.sampling.seed, &tol)?;
    checks.push(Check::new(
        "critical control scan",
        scan.verdict == ScanVerdict::Refuted && scan.min_margin <= 1e-10,
        format!("{:?}, min margin {:.1e}", scan.verdict, scan.min_margin),
    ));

    let run = continuation(
        &sys,
        &concat_path(&constant(-0.6, 1.0), &constant(-0.3, 1.0)),
        &ContinuationOptions {
            tol,
            ..ContinuationOptions::default()
        },
    )?;
    let diagonal = point(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let big = run.blow_up(1e3);
    let (mut angle, mut dist): (f64, f64) = (0.0, 0.0);
    for r in &big {
        angle = angle.max(r.kernel_angle.unwrap_or(f64::INFINITY));
        dist = dist.max(
            r.kernel_direction
                .as_ref()
                .and_then(|k| ProjPoint::new(k.clone()).ok())
                .map_or(f64::INFINITY, |k| proj_metric(&k, &diagonal)),
        );
    }
    checks.push(Check::new(
        "blow-up alignment",
        !big.is_empty() && angle <= 0.05 && dist <= 0.02,
        format!(
            "{} records above 1e3, max kernel angle {angle:.1e}, max kernel distance {dist:.1e}",
            big.len()
        ),
    ));

    let points: Vec<DVector<f64>> = [0.499, 0.501, -0.499, -0.501]
        .iter()
        .filter_map(|&u| sys.equilibrium(&uvec(u)).ok().flatten())
        .collect();
    let report = infinity_boundary_directions(
        &points,
        &[],
        &DirectionOptions {
            norm_floor: 10.0,
            cluster_tol: file.tolerances.cluster_tol,
        },
    )?;
    let targets = [point(&[-1.0, 1.0, 0.0]), point(&[1.0, 1.0, 0.0])];
    let near = |t: &ProjPoint| {
        report
            .clusters
            .iter()
            .map(|c| proj_metric(&c.representative, t))
            .fold(f64::INFINITY, f64::min)
    };
    let (d0, d1) = (near(&targets[0]), near(&targets[1]));
    checks.push(Check::new(
        "directions of equilibria",
        report.clusters.len() == 2 && d0 <= 0.05 && d1 <= 0.05,
        format!("{} clusters, distances {d0:.1e} and {d1:.1e}", report.clusters.len()),
    ));

    let analysis = infinity_boundary_chain(&embed_system(&sys), &SphereGridParams::default(), &file.controls(), 1.0)?;
    let (grid, d) = control_set_at(&sys, file, &DVector::zeros(2))?;
    let met = components_met(&analysis, &grid, &d);
    let origin = analysis.component_of(&ProjPoint::of_state(&DVector::zeros(2))?);
    let (pass, detail) = match origin {
        Some(k) => {
            let mut hom: Vec<usize> = analysis.matches_of(k).iter().map(|m| m.hom_component).collect();
            hom.dedup();
            let all = analysis.hom_components.len();
            (
                met == vec![k] && all >= 2 && hom.len() == all,
                format!(
                    "component {k} of {} holds the control set image and meets {}/{} homogeneous components",
                    analysis.components.len(),
                    hom.len(),
                    all
                ),
            )
        }
        None => (false, "the origin lies in no chain component".to_string()),
    };
    checks.push(Check::new("chain component at infinity", pass, detail));
    Ok(checks)
}

fn example_7_13(file: &SystemFile) -> CliResult<Vec<Check>> {
    let sys = file.to_system();
    let eps = sys.b()[0][(1, 1)] - 2.0;
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for u in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let a: DMatrix<f64> = sys.a_of_u(&uvec(u))?;
        let mut eig: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        let (l1, l2) = catalog::example_7_13_eigenvalues(u, eps);
        worst = worst.max((eig[0] - l1).abs()).max((eig[1] - l2).abs());
    }
    checks.push(Check::new(
        "eigenvalue formula",
        worst <= 1e-10,
        format!("eps {eps:.3}, max deviation {worst:.1e}"),
    ));

    let mut crossings = Vec::new();
    for e in [0.05, 0.01, 0.002] {
        let s = catalog::example_7_13(e);
        let u1 = eigenvalue_zero_crossing(&s, 0, -1.0, 0.0)?;
        let u2 = eigenvalue_zero_crossing(&s, 1, 0.0, 1.0)?;
        crossings.push((e, u1, u2));
    }
    let found: Vec<(f64, f64)> = crossings.iter().filter_map(|&(_, a, b)| Some((a?, b?))).collect();
    let monotone = found.len() == crossings.len()
        && found.windows(2).all(|w| {
            (w[1].0 + 0.5).abs() < (w[0].0 + 0.5).abs() && (w[1].1 - 0.5).abs() < (w[0].1 - 0.5).abs()
        });
    let detail = found
        .iter()
        .zip(&crossings)
        .map(|((a, b), (e, _, _))| format!("eps {e}: ({a:.6}, {b:.6})"))
        .collect::<Vec<_>>()
        .join(", ");
    checks.push(Check::new("zero crossings", monotone, detail));
    Ok(checks)
}

fn example_7_14(file: &SystemFile) -> CliResult<Vec<Check>> {
    let sys = file.to_system();
    let tol = file.floquet_tolerances();
    let mut checks = Vec::new();

    let critical = constant(-1.0, 1.0);
    let (_, data) = floquet_of(&sys, &critical, &tol)?;
    let zero = data.exponents.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "zero exponent",
        zero <= 1e-9,
        format!("exponents {:?}", data.exponents),
    ));
    let sol = periodic_solution(&sys, &critical, &tol)?;
    let residual = match &sol {
        PeriodicSolution::Obstructed { residual } => format!(", residual {residual:.3}"),
        _ => String::new(),
    };
    checks.push(Check::new(
        "obstructed periodic solution",
        matches!(sol, PeriodicSolution::Obstructed { .. }),
        format!("{}{residual}", sol.kind()),
    ));

    let d = sys.d()[1];
    let seeds = [DVector::from_vec(vec![11.0, 0.0]), DVector::from_vec(vec![d, 0.0])];
    let grid = grid_of(file)?;
    let graph = build_transition_graph(&sys, &grid, &file.sampling_params())?;
    let mut sets = Vec::new();
    for s in &seeds {
        let idx = grid
            .locate(s)
            .ok_or_else(|| CliError::Usage("seed point outside the window".into()))?;
        sets.push(control_set_approx(&graph, idx)?);
    }
    let analysis = infinity_boundary_chain(&embed_system(&sys), &SphereGridParams::default(), &file.controls(), 1.0)?;
    let met1 = components_met(&analysis, &grid, &sets[0]);
    let met2 = components_met(&analysis, &grid, &sets[1]);
    let shared: Vec<usize> = met1.iter().copied().filter(|k| met2.contains(k)).collect();
    let axis = point(&[1.0, 0.0, 0.0]);
    let touches = |k: usize| {
        analysis.component_of(&axis) == Some(k)
            || analysis
                .level_zero_slice(k)
                .iter()
                .any(|q| proj_metric(q, &axis) <= analysis.match_tol)
    };
    let pass = !sets[0].is_empty() && !sets[1].is_empty() && shared.len() == 1 && touches(shared[0]);
    checks.push(Check::new(
        "single chain control set",
        pass,
        format!(
            "control sets of {} and {} boxes, components met {:?} and {:?}, shared {:?}",
            sets[0].len(),
            sets[1].len(),
            met1,
            met2,
            shared
        ),
    ));
    Ok(checks)
}
