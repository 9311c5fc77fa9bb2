mod common;

use affctl_core::catalog;
use affctl_core::floquet::{concat_path, continuation, ContinuationOptions};
use affctl_core::projective::*;
use affctl_core::system::{simulate, AffineSystem, ControlRange, PiecewiseControl, SimOptions};
use common::{random_control, random_system};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn unit3() -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 3)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(DVector::from_vec)
}

fn reversed(sys: &AffineSystem) -> AffineSystem {
    AffineSystem::new(
        -sys.a(),
        sys.b().iter().map(|b| -b).collect(),
        -sys.c(),
        -sys.d(),
        sys.omega().clone(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metric_axioms(a in unit3(), b in unit3(), c in unit3()) {
        let (p, q, r) = (ProjPoint::new(a.clone()).unwrap(), ProjPoint::new(b).unwrap(), ProjPoint::new(c).unwrap());
        prop_assert!((proj_metric(&p, &q) - proj_metric(&q, &p)).abs() <= 1e-12);
        prop_assert!(proj_metric(&p, &r) <= proj_metric(&p, &q) + proj_metric(&q, &r) + 1e-12);
        let minus = ProjPoint::new(-a).unwrap();
        prop_assert!(proj_metric(&p, &minus) <= 1e-12);
        prop_assert!(proj_metric(&p, &q) >= 0.0);
    }

    #[test]
    fn representatives_are_canonical(a in unit3(), scale in -5.0f64..5.0) {
        prop_assume!(scale.abs() > 1e-3);
        let p = ProjPoint::new(a.clone() * scale).unwrap();
        prop_assert!((p.rep().norm() - 1.0).abs() <= 1e-12);
        let again = ProjPoint::new(p.rep().clone()).unwrap();
        prop_assert!((again.rep() - p.rep()).norm() <= 1e-15 && again.level() == p.level());
        let q = ProjPoint::new(a).unwrap();
        prop_assert!((q.rep() - p.rep()).norm() <= 1e-14);
    }

    #[test]
    fn embedding_preserves_the_metric(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
        prop_assume!(a.abs() + b.abs() > 1e-3 && c.abs() + d.abs() > 1e-3);
        let p = ProjPoint::new(DVector::from_vec(vec![a, b])).unwrap();
        let q = ProjPoint::new(DVector::from_vec(vec![c, d])).unwrap();
        prop_assert!((proj_metric(&p, &q) - proj_metric(&embed_point(&p), &embed_point(&q))).abs() <= 1e-12);
        prop_assert!(proj_metric(&restrict_point(&embed_point(&p)).unwrap(), &p) <= 1e-12);
    }

    #[test]
    fn level_zero_is_invariant(seed in 0u64..10_000, x in unit3(), steps in 1usize..20) {
        let sys = random_system(seed, 2, 1);
        let fwd = embed_system(&sys);
        let bwd = embed_system(&reversed(&sys));
        let mut p = ProjPoint::at_infinity(&x.rows(0, 2).into_owned()).unwrap();
        let ctrl = random_control(seed, 1, steps, 1.0);
        for seg in ctrl.segments() {
            p = proj_step(&fwd, &p, &seg.value, seg.duration).unwrap();
            prop_assert_eq!(p.level(), Level::P0);
            prop_assert_eq!(p.rep()[2], 0.0);
        }
        for seg in ctrl.segments().iter().rev() {
            p = proj_step(&bwd, &p, &seg.value, seg.duration).unwrap();
            prop_assert_eq!(p.level(), Level::P0);
        }
    }

    #[test]
    fn embedded_system_reproduces_trajectories(seed in 0u64..10_000, n in 1usize..=3, t in 0.1f64..1.5) {
        let sys = random_system(seed, n, 1);
        let emb = embed_system(&sys).as_system();
        let ctrl = random_control(seed, 1, 3, 1.0);
        let x0 = DVector::from_fn(n, |i, _| (i as f64 + seed as f64).cos());
        let opts = SimOptions::default();
        let affine = simulate(&sys, &ctrl, &x0, t, &opts).unwrap();
        let lifted = simulate(&emb, &ctrl, &x0.push(1.0), t, &opts).unwrap();
        let end = lifted.endpoint();
        prop_assert!((end.rows(0, n) - affine.endpoint()).norm() <= 1e-10 * (1.0 + affine.endpoint().norm()));
        prop_assert!((end[n] - 1.0).abs() <= 1e-12);
        let hom = simulate(&sys.homogeneous_part(), &ctrl, &x0, t, &opts).unwrap();
        let level0 = simulate(&emb, &ctrl, &x0.push(0.0), t, &opts).unwrap();
        prop_assert!((level0.endpoint().rows(0, n) - hom.endpoint()).norm() <= 1e-10 * (1.0 + hom.endpoint().norm()));
        prop_assert_eq!(level0.endpoint()[n], 0.0);
    }

    #[test]
    fn eigendirections_are_fixed(u in -1.0f64..1.0, dt in 0.05f64..2.0) {
        let sys = catalog::example_7_12();
        let emb = embed_system(&sys);
        let diag = ProjPoint::new(DVector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        let stepped = proj_step(&emb, &diag, &DVector::from_element(1, u), dt).unwrap();
        prop_assert!(proj_metric(&stepped, &diag) <= 1e-12);
    }
}

#[test]
fn estimators_are_consistent_on_example_7_12() {
    let sys = catalog::example_7_12();
    let us: Vec<f64> = (1..=40).map(|k| 0.5 - 0.5f64.powi(k / 2 + 2) * if k % 2 == 0 { 1.0 } else { 0.7 }).collect();
    let mut points = Vec::new();
    for &u in &us {
        points.push(catalog::example_7_12_equilibrium(u));
        points.push(catalog::example_7_12_equilibrium(-u));
    }
    let report = infinity_boundary_directions(
        &points,
        &[],
        &DirectionOptions {
            norm_floor: 10.0,
            cluster_tol: default_cluster_tol(3),
        },
    )
    .unwrap();
    assert_eq!(report.clusters.len(), 2);

    let controls = ControlRange::symmetric(1, 1.0).unwrap().grid(5);
    let chain = infinity_boundary_chain(&embed_system(&sys), &SphereGridParams::default(), &controls, 1.0).unwrap();
    let slack = 2.0 * chain.grid().box_diameter();
    for cluster in &report.clusters {
        let near = chain.touching.iter().any(|&k| {
            chain
                .level_zero_slice(k)
                .iter()
                .any(|q| proj_metric(q, &cluster.representative) <= slack)
        });
        assert!(near);
    }
}

#[test]
fn blow_up_directions_lie_in_homogeneous_components() {
    let sys = catalog::example_7_12();
    let u = PiecewiseControl::constant(DVector::from_element(1, -0.6), 1.0).unwrap();
    let v = PiecewiseControl::constant(DVector::from_element(1, -0.3), 1.0).unwrap();
    let run = continuation(&sys, &concat_path(&u, &v), &ContinuationOptions::default()).unwrap();
    let controls = ControlRange::symmetric(1, 1.0).unwrap().grid(5);
    let chain = infinity_boundary_chain(&embed_system(&sys), &SphereGridParams::default(), &controls, 1.0).unwrap();
    let hom_grid = chain.hom_graph.grid();
    let big = run.blow_up(1e3);
    assert!(!big.is_empty());
    for r in big {
        let x = r.solution.point().unwrap();
        let idx = hom_grid.locate(x).unwrap();
        let slack = hom_grid.box_diameter();
        let p = ProjPoint::new(x.clone()).unwrap();
        let inside = chain.hom_components.iter().any(|c| {
            c.contains(idx) || c.indices().iter().any(|&j| proj_metric(&hom_grid.center(j), &p) <= slack)
        });
        assert!(inside);
    }
}

#[test]
fn saddle_flow_on_projective_line() {
    let grid = ProjGrid::new(2, 33).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]);
    let opts = ProjGraphOptions {
        dt: 0.5,
        pts_per_box: 8,
        seed: 0,
        jump: 0.0,
    };
    let comps = ProjTransitionGraph::build(grid, &[a], &opts).unwrap().chain_components();
    assert_eq!(comps.len(), 2);
}

#[test]
fn lyapunov_estimate_of_eigenvector_is_exact() {
    let sys = catalog::example_7_14(1.1, 0.5);
    for u in [-1.1, -0.5, 0.0, 0.7] {
        // real eigenvalues of [[0,1],[-1-u,-3]]: λ² + 3λ + 1 + u = 0
        let disc: f64 = 9.0 - 4.0 * (1.0 + u);
        // the fast mode is repelling in direction, so only short horizons are exact
        let modes = [((-3.0 + disc.sqrt()) / 2.0, 17.0), ((-3.0 - disc.sqrt()) / 2.0, 2.0)];
        for (lambda, horizon) in modes {
            let x = DVector::from_vec(vec![1.0, lambda]);
            let ctrl = PiecewiseControl::constant(DVector::from_element(1, u), 0.8).unwrap();
            for t in [0.3, horizon] {
                let est = lyapunov_estimate(&sys, &ctrl, &x, t).unwrap();
                assert!((est - lambda).abs() <= 1e-9, "u {u} t {t}: {est} vs {lambda}");
            }
        }
    }
}
