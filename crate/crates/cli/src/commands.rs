use std::fs;
use std::path::Path;
use std::time::Instant;

use affctl_core::floquet::{
    concat_path, continuation, floquet_of, hyperbolicity_scan, periodic_solution, ContinuationOptions,
    ControlSampler, PeriodicSolution, SamplerKind,
};
use affctl_core::projective::{
    embed_system, infinity_boundary_chain, infinity_boundary_of_set, DirectionOptions, ProjPoint, SphereGridParams,
};
use affctl_core::reach::{
    build_transition_graph, chain_components, control_set_approx, is_invariant, refine, BoxGrid, BoxSet,
    TransitionGraph, DEFAULT_CELL_CAP,
};
use affctl_core::system::{larc_rank, simulate, AffineSystem, PiecewiseControl, Segment, SimOptions};
use nalgebra::DVector;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::{cell, row, OutputDir, RunReport};
use crate::system_file::SystemFile;
use crate::verify;
use crate::{bundled, Cli, Command, GridArgs, Outcome, ScanKind};

struct Ctx {
    file: SystemFile,
    sys: AffineSystem,
    digest: String,
    out: OutputDir,
}

fn load(path: Option<&Path>, fallback: Option<&'static str>, seed: Option<u64>, out: &Path) -> CliResult<Ctx> {
    let (name, bytes) = match (path, fallback) {
        (Some(p), _) => (p.display().to_string(), fs::read(p).map_err(|e| CliError::io(p, e))?),
        (None, Some(text)) => ("<bundled>".to_string(), text.as_bytes().to_vec()),
        (None, None) => return Err(CliError::Usage("--system <file> is required".into())),
    };
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CliError::io(&name, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let mut file = SystemFile::parse(&text).map_err(|diagnostics| CliError::Parse {
        path: name,
        diagnostics,
    })?;
    if let Some(s) = seed {
        file.sampling.seed = s;
    }
    let sys = file.to_system();
    Ok(Ctx {
        file,
        sys,
        digest: hex::encode(Sha256::digest(&bytes)),
        out: OutputDir::create(out)?,
    })
}

pub(crate) fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    let start = Instant::now();
    let g = &cli.global;
    let fallback = match &cli.command {
        Command::VerifyExample { example } => bundled::example(example),
        _ => None,
    };
    let mut ctx = load(g.system.as_deref(), fallback, g.seed, &g.out)?;
    let name = command_name(&cli.command);
    let (args, results, lines, failed_checks) = match &cli.command {
        Command::Simulate {
            control,
            x0,
            t,
            sample_step,
        } => cmd_simulate(&mut ctx, control, x0, *t, *sample_step)?,
        Command::Floquet { control } => cmd_floquet(&ctx, control)?,
        Command::Periodic { control } => cmd_periodic(&ctx, control)?,
        Command::Hypscan {
            samples,
            kind,
            period_min,
            period_max,
            segments_max,
            extra,
        } => cmd_hypscan(&mut ctx, *samples, *kind, (*period_min, *period_max), *segments_max, extra)?,
        Command::Continue {
            from,
            to,
            steps,
            refine_depth,
        } => cmd_continue(&mut ctx, from, to, *steps, *refine_depth)?,
        Command::Controlset { grid, point } => cmd_controlset(&mut ctx, grid, point.as_deref())?,
        Command::Chainsets { grid } => cmd_chainsets(&mut ctx, grid)?,
        Command::Infinity {
            grid,
            point,
            norm_floor,
            no_chain,
            cells,
            hom_cells,
            proj_dt,
            proj_pts,
            jump,
            from,
            to,
        } => cmd_infinity(
            &mut ctx,
            grid,
            point.as_deref(),
            *norm_floor,
            !*no_chain,
            SphereGridParams {
                cells: *cells,
                hom_cells: *hom_cells,
                pts_per_box: *proj_pts,
                seed: 0,
                jump: *jump,
                cell_cap: DEFAULT_CELL_CAP,
            },
            *proj_dt,
            from.as_deref().zip(to.as_deref()),
        )?,
        Command::VerifyExample { example } => {
            let checks = verify::run(example, &ctx.file)?;
            let lines: Vec<String> = checks.iter().map(verify::Check::line).collect();
            let failed = checks.iter().filter(|c| !c.pass).count();
            (json!({ "example": example }), json!({ "checks": checks, "failed": failed }), lines, failed)
        }
    };
    let report = RunReport {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        input_digest: ctx.digest.clone(),
        config: json!({ "args": args, "system": ctx.file }),
        results,
        artifacts: ctx.out.artifacts(),
        wall_time: g.timing.then(|| start.elapsed().as_secs_f64()),
    };
    let report_name = format!("{name}.json");
    ctx.out.write_report(&report_name, &report)?;
    let mut lines = lines;
    lines.push(format!("wrote {}", ctx.out.path().join(&report_name).display()));
    Ok(Outcome {
        report,
        lines,
        failed_checks,
    })
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate { .. } => "simulate",
        Command::Floquet { .. } => "floquet",
        Command::Periodic { .. } => "periodic",
        Command::Hypscan { .. } => "hypscan",
        Command::Continue { .. } => "continue",
        Command::Controlset { .. } => "controlset",
        Command::Chainsets { .. } => "chainsets",
        Command::Infinity { .. } => "infinity",
        Command::VerifyExample { .. } => "verify-example",
    }
}

type Produced = (Value, Value, Vec<String>, usize);

fn parse_vector(text: &str, len: usize, what: &str) -> CliResult<DVector<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("{what}: {e} in {text:?}")))?;
    if values.len() != len {
        return Err(CliError::Usage(format!("{what}: expected {len} values, got {}", values.len())));
    }
    Ok(DVector::from_vec(values))
}

/// `v1,..,vm@duration;...`; a segment without `@` lasts one time unit.
fn parse_control(text: &str, m: usize) -> CliResult<PiecewiseControl> {
    let mut segments = Vec::new();
    for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (values, duration) = match part.split_once('@') {
            Some((v, d)) => (
                v,
                d.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Usage(format!("control duration: {e} in {part:?}")))?,
            ),
            None => (part, 1.0),
        };
        segments.push(Segment {
            value: parse_vector(values, m, "control value")?,
            duration,
        });
    }
    Ok(PiecewiseControl::new(segments)?)
}

fn control_json(ctrl: &PiecewiseControl) -> Value {
    Value::Array(
        ctrl.segments()
            .iter()
            .map(|s| json!({ "value": s.value.as_slice(), "duration": s.duration }))
            .collect(),
    )
}

fn cmd_simulate(ctx: &mut Ctx, control: &str, x0: &str, t: f64, sample_step: Option<f64>) -> CliResult<Produced> {
    let ctrl = parse_control(control, ctx.sys.m())?;
    let x0 = parse_vector(x0, ctx.sys.n(), "x0")?;
    let traj = simulate(&ctx.sys, &ctrl, &x0, t, &SimOptions { sample_step })?;
    let (n, m) = (ctx.sys.n(), ctx.sys.m());
    ctx.out.write("trajectory.csv", |w| {
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        row(w, &header)?;
        for (time, x) in traj.times.iter().zip(&traj.states) {
            let mut cells = vec![cell(Some(*time))];
            cells.extend(x.iter().map(|v| cell(Some(*v))));
            cells.extend(ctrl.value_at(*time).iter().map(|v| cell(Some(*v))));
            row(w, &cells)?;
        }
        Ok(())
    })?;
    Ok((
        json!({ "control": control_json(&ctrl), "x0": x0.as_slice(), "t": t, "sample_step": sample_step }),
        json!({ "samples": traj.times.len(), "endpoint": traj.endpoint().as_slice() }),
        Vec::new(),
        0,
    ))
}

fn cmd_floquet(ctx: &Ctx, control: &str) -> CliResult<Produced> {
    let ctrl = parse_control(control, ctx.sys.m())?;
    let (mono, data) = floquet_of(&ctx.sys, &ctrl, &ctx.file.floquet_tolerances())?;
    let rows: Vec<Vec<f64>> = mono.phi.row_iter().map(|r| r.iter().copied().collect()).collect();
    let multipliers: Vec<Value> = data
        .multipliers
        .iter()
        .map(|r| json!({ "re": r.re, "im": r.im, "modulus": r.norm() }))
        .collect();
    let eigenspace: Vec<&[f64]> = data.unit_eigenspace.iter().map(|v| v.as_slice()).collect();
    Ok((
        json!({ "control": control_json(&ctrl) }),
        json!({
            "tau": mono.tau,
            "monodromy": rows,
            "multipliers": multipliers,
            "exponents": data.exponents,
            "margin": data.margin,
            "unit_multiplier": data.unit_multiplier,
            "unit_eigenspace": eigenspace,
        }),
        Vec::new(),
        0,
    ))
}

fn cmd_periodic(ctx: &Ctx, control: &str) -> CliResult<Produced> {
    let ctrl = parse_control(control, ctx.sys.m())?;
    let tol = ctx.file.floquet_tolerances();
    let (_, data) = floquet_of(&ctx.sys, &ctrl, &tol)?;
    let sol = periodic_solution(&ctx.sys, &ctrl, &tol)?;
    let mut results = json!({ "kind": sol.kind(), "margin": data.margin });
    match &sol {
        PeriodicSolution::Unique { x0 } => {
            results["x0"] = json!(x0.as_slice());
        }
        PeriodicSolution::AffineFamily { y0, basis } => {
            results["y0"] = json!(y0.as_slice());
            results["basis"] = json!(basis.iter().map(|b| b.as_slice()).collect::<Vec<_>>());
        }
        PeriodicSolution::Obstructed { residual } => {
            results["residual"] = json!(residual);
        }
    }
    if let Some(x) = sol.point() {
        let end = simulate(&ctx.sys, &ctrl, x, ctrl.period(), &SimOptions::default())?;
        results["closure_defect"] = json!((end.endpoint() - x).norm());
        let n = ctx.sys.n();
        results["bracket_rank"] = json!(larc_rank(&ctx.sys, x, 2 * n, ctx.file.tolerances.rank_tol)?);
    }
    Ok((json!({ "control": control_json(&ctrl) }), results, Vec::new(), 0))
}

fn cmd_hypscan(
    ctx: &mut Ctx,
    samples: usize,
    kind: ScanKind,
    period: (f64, f64),
    segments_max: usize,
    extra: &[String],
) -> CliResult<Produced> {
    if !(period.0 > 0.0 && period.1 >= period.0) {
        return Err(CliError::Usage("need 0 < --period-min <= --period-max".into()));
    }
    let extra = extra
        .iter()
        .map(|c| parse_control(c, ctx.sys.m()))
        .collect::<CliResult<Vec<_>>>()?;
    let sampler = ControlSampler {
        kind: match kind {
            ScanKind::Mixed => SamplerKind::Mixed,
            ScanKind::BangBang => SamplerKind::BangBang,
            ScanKind::RandomLevel => SamplerKind::RandomLevel,
        },
        period,
        segments: (1, segments_max.max(1)),
        extra: extra.clone(),
    };
    let seed = ctx.file.sampling.seed;
    let report = hyperbolicity_scan(&ctx.sys, &sampler, samples, seed, &ctx.file.floquet_tolerances())?;
    ctx.out.write("hypscan_margins.csv", |w| {
        row(w, &["index".into(), "margin".into()])?;
        for (i, m) in report.margins.iter().enumerate() {
            row(w, &[i.to_string(), cell(Some(*m))])?;
        }
        Ok(())
    })?;
    let verdict = match report.verdict {
        affctl_core::floquet::ScanVerdict::Refuted => "REFUTED",
        affctl_core::floquet::ScanVerdict::NotRefuted => "NOT-REFUTED",
    };
    Ok((
        json!({
            "samples": samples,
            "kind": format!("{kind:?}"),
            "period": [period.0, period.1],
            "segments_max": segments_max,
            "extra": extra.iter().map(control_json).collect::<Vec<_>>(),
        }),
        json!({
            "verdict": verdict,
            "min_margin": report.min_margin,
            "argmin": report.argmin,
            "argmin_control": control_json(&report.argmin_control),
            "interior_proxy": report.interior_proxy,
            "scanned": report.margins.len(),
        }),
        vec![format!("{verdict}, min margin {}", report.min_margin)],
        0,
    ))
}

fn cmd_continue(ctx: &mut Ctx, from: &str, to: &str, steps: usize, refine_depth: usize) -> CliResult<Produced> {
    let u = parse_control(from, ctx.sys.m())?;
    let v = parse_control(to, ctx.sys.m())?;
    let opts = ContinuationOptions {
        steps,
        refine_depth,
        tol: ctx.file.floquet_tolerances(),
        ..ContinuationOptions::default()
    };
    let run = continuation(&ctx.sys, &concat_path(&u, &v), &opts)?;
    let n = ctx.sys.n();
    ctx.out.write("continuation.csv", |w| {
        let mut header: Vec<String> = [
            "alpha",
            "tau",
            "det_gap",
            "det_scale",
            "margin",
            "kind",
            "norm_x",
            "kernel_angle",
            "refined",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("k{i}")));
        row(w, &header)?;
        for r in &run.records {
            let mut cells = vec![
                cell(Some(r.alpha)),
                cell(Some(r.tau)),
                cell(Some(r.det_gap)),
                cell(Some(r.det_scale)),
                cell(Some(r.margin)),
                r.solution.kind().to_string(),
                cell(r.norm_x),
                cell(r.kernel_angle),
                r.refined.to_string(),
            ];
            let x = r.solution.point();
            cells.extend((0..n).map(|i| cell(x.map(|x| x[i]))));
            cells.extend((0..n).map(|i| cell(r.kernel_direction.as_ref().map(|k| k[i]))));
            row(w, &cells)?;
        }
        Ok(())
    })?;
    let max_norm = run.records.iter().filter_map(|r| r.norm_x).fold(0.0, f64::max);
    Ok((
        json!({ "from": control_json(&u), "to": control_json(&v), "steps": steps, "refine_depth": refine_depth }),
        json!({
            "records": run.records.len(),
            "crossings": run.crossings.iter().map(|c| [c.0, c.1]).collect::<Vec<_>>(),
            "max_norm": max_norm,
            "blow_up_records": run.blow_up(1e3).len(),
        }),
        Vec::new(),
        0,
    ))
}

/// Grid and sampling after command-line overrides.
fn effective_grid(ctx: &mut Ctx, args: &GridArgs) -> CliResult<(BoxGrid, Value)> {
    let n = ctx.sys.n();
    let grid_spec = ctx
        .file
        .grid
        .as_mut()
        .ok_or_else(|| CliError::Usage("the system file has no [grid] section".into()))?;
    if let Some(s) = &args.subdivisions {
        let sub = s
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("--subdivisions: {e}")))?;
        if sub.len() != n || sub.contains(&0) {
            return Err(CliError::Usage(format!("--subdivisions needs {n} positive counts")));
        }
        grid_spec.subdivisions = sub;
    }
    let sampling = &mut ctx.file.sampling;
    if let Some(dt) = args.dt {
        if !(dt > 0.0) {
            return Err(CliError::Usage("--dt must be positive".into()));
        }
        sampling.dt = dt;
    }
    if let Some(p) = args.pts_per_box {
        if p == 0 {
            return Err(CliError::Usage("--pts-per-box must be positive".into()));
        }
        sampling.pts_per_box = p;
    }
    if let Some(l) = args.levels {
        if l == 0 {
            return Err(CliError::Usage("--levels must be positive".into()));
        }
        sampling.levels = l;
        sampling.controls = None;
    }
    let grid = ctx.file.box_grid().expect("grid section present");
    let total: usize = grid.subdivisions().iter().product();
    if total > DEFAULT_CELL_CAP {
        return Err(affctl_core::Error::MemoryCap {
            requested: total,
            cap: DEFAULT_CELL_CAP,
        }
        .into());
    }
    Ok((grid, json!({ "refine": args.refine })))
}

fn seed_point(ctx: &Ctx, point: Option<&str>) -> CliResult<DVector<f64>> {
    match point {
        Some(p) => parse_vector(p, ctx.sys.n(), "--point"),
        None => {
            let zero = DVector::zeros(ctx.sys.m());
            let u0 = if ctx.sys.omega().contains(&zero) { zero } else { ctx.file.controls()[0].clone() };
            if let Some(x) = ctx.sys.equilibrium(&u0)? {
                return Ok(x);
            }
            let origin = DVector::zeros(ctx.sys.n());
            if ctx.sys.vector_field(&u0, &origin)?.norm() == 0.0 {
                Ok(origin)
            } else {
                Err(CliError::Usage("no isolated equilibrium at u = 0; pass --point".into()))
            }
        }
    }
}

/// Control set around `seed`, refined `rounds` times.
fn refined_control_set(
    ctx: &Ctx,
    grid: &BoxGrid,
    seed: &DVector<f64>,
    rounds: usize,
) -> CliResult<(TransitionGraph, BoxSet)> {
    let params = ctx.file.sampling_params();
    let locate = |g: &BoxGrid| {
        g.locate(seed)
            .ok_or_else(|| CliError::Usage(format!("seed point {:?} is outside the window", seed.as_slice())))
    };
    let mut graph = build_transition_graph(&ctx.sys, grid, &params)?;
    let mut set = control_set_approx(&graph, locate(grid)?)?;
    for _ in 0..rounds {
        graph = refine(&ctx.sys, &graph, &set, 2, &params, DEFAULT_CELL_CAP)?;
        set = control_set_approx(&graph, locate(graph.grid())?)?;
    }
    Ok((graph, set))
}

fn set_summary(grid: &BoxGrid, set: &BoxSet, graph: &TransitionGraph) -> Value {
    let ext = grid.extent();
    let mut lo = vec![f64::INFINITY; grid.dim()];
    let mut hi = vec![f64::NEG_INFINITY; grid.dim()];
    for &i in set.indices() {
        let c = grid.center(i);
        for k in 0..grid.dim() {
            lo[k] = lo[k].min(c[k] - 0.5 * ext[k]);
            hi[k] = hi[k].max(c[k] + 0.5 * ext[k]);
        }
    }
    let bounds = if set.is_empty() { Value::Null } else { json!({ "lo": lo, "hi": hi }) };
    json!({
        "boxes": set.len(),
        "volume": set.len() as f64 * grid.box_volume(),
        "bounds": bounds,
        "invariant": is_invariant(graph, set),
        "run_lengths": set.run_lengths(),
    })
}

fn cmd_controlset(ctx: &mut Ctx, args: &GridArgs, point: Option<&str>) -> CliResult<Produced> {
    let (grid, mut echo) = effective_grid(ctx, args)?;
    let seed = seed_point(ctx, point)?;
    let (graph, set) = refined_control_set(ctx, &grid, &seed, args.refine)?;
    let fine = graph.grid();
    ctx.out.write("controlset.csv", |w| set.write_csv(fine, w))?;
    echo["point"] = json!(seed.as_slice());
    let mut results = set_summary(fine, &set, &graph);
    results["subdivisions"] = json!(fine.subdivisions());
    results["edges"] = json!(graph.edge_count());
    Ok((echo, results, vec![format!("control set: {} boxes", set.len())], 0))
}

fn cmd_chainsets(ctx: &mut Ctx, args: &GridArgs) -> CliResult<Produced> {
    let (grid, echo) = effective_grid(ctx, args)?;
    let graph = build_transition_graph(&ctx.sys, &grid, &ctx.file.sampling_params())?;
    let comps = chain_components(&graph);
    let mut summaries = Vec::new();
    for (k, c) in comps.iter().enumerate() {
        ctx.out.write(&format!("chainset_{k}.csv"), |w| c.write_csv(&grid, w))?;
        summaries.push(set_summary(&grid, c, &graph));
    }
    Ok((
        echo,
        json!({ "components": summaries }),
        vec![format!("{} chain components", comps.len())],
        0,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_infinity(
    ctx: &mut Ctx,
    args: &GridArgs,
    point: Option<&str>,
    norm_floor: Option<f64>,
    chain: bool,
    mut sphere: SphereGridParams,
    proj_dt: f64,
    path: Option<(&str, &str)>,
) -> CliResult<Produced> {
    let (grid, mut echo) = effective_grid(ctx, args)?;
    let seed = seed_point(ctx, point)?;
    let (graph, set) = refined_control_set(ctx, &grid, &seed, args.refine)?;
    let fine = graph.grid();
    let mut opts = DirectionOptions::for_window(fine);
    opts.cluster_tol = ctx.file.tolerances.cluster_tol;
    if let Some(f) = norm_floor {
        opts.norm_floor = f;
    }
    let records = match path {
        Some((from, to)) => {
            let u = parse_control(from, ctx.sys.m())?;
            let v = parse_control(to, ctx.sys.m())?;
            let opts = ContinuationOptions {
                tol: ctx.file.floquet_tolerances(),
                ..ContinuationOptions::default()
            };
            continuation(&ctx.sys, &concat_path(&u, &v), &opts)?.records
        }
        None => Vec::new(),
    };
    let report = infinity_boundary_of_set(fine, &set, &records, &opts)?;
    ctx.out.write("directions.csv", |w| report.write_directions_csv(w))?;
    echo["point"] = json!(seed.as_slice());
    echo["norm_floor"] = json!(opts.norm_floor);
    echo["cluster_tol"] = json!(opts.cluster_tol);
    let mut results = json!({
        "control_set_boxes": set.len(),
        "estimator_a": report,
    });
    let mut lines = vec![format!("{} direction clusters", report.clusters.len())];

    if chain {
        sphere.seed = ctx.file.sampling.seed;
        echo["sphere"] = json!({
            "cells": sphere.cells,
            "hom_cells": sphere.hom_cells,
            "pts_per_box": sphere.pts_per_box,
            "jump": sphere.jump,
            "dt": proj_dt,
        });
        let analysis = infinity_boundary_chain(&embed_system(&ctx.sys), &sphere, &ctx.file.controls(), proj_dt)?;
        let level_tol = ctx.file.tolerances.level_tol;
        ctx.out.write("chain_directions.csv", |w| {
            let dim = analysis.grid().ambient_dim();
            let mut header: Vec<String> = (0..dim).map(|i| format!("p{i}")).collect();
            header.push("level".into());
            row(w, &header)?;
            for p in &analysis.report.directions {
                let q = ProjPoint::with_level_tol(p.rep().clone(), level_tol).expect("unit representative");
                let mut cells: Vec<String> = q.rep().iter().map(|c| cell(Some(*c))).collect();
                cells.push(format!("{:?}", q.level()));
                row(w, &cells)?;
            }
            Ok(())
        })?;
        let met = verify::components_met(&analysis, fine, &set);
        results["estimator_b"] = json!({
            "components": analysis.components.iter().map(BoxSet::len).collect::<Vec<_>>(),
            "hom_components": analysis.hom_components.iter().map(BoxSet::len).collect::<Vec<_>>(),
            "touching": analysis.touching,
            "clusters": analysis.report.clusters,
            "matches": analysis.report.matches,
            "match_tol": analysis.match_tol,
            "control_set_components": met,
        });
        lines.push(format!(
            "{} projective chain components, {} touching infinity",
            analysis.components.len(),
            analysis.touching.len()
        ));
    }
    Ok((echo, results, lines, 0))
}
