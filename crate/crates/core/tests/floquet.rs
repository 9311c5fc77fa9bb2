mod common;

use affctl_core::catalog;
use affctl_core::floquet::*;
use affctl_core::projective::lyapunov_estimate;
use affctl_core::system::{simulate, PiecewiseControl, SimOptions};
use common::{ode_principal, ode_solution, random_control, random_system};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn uvec(u: f64) -> DVector<f64> {
    DVector::from_element(1, u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cocycle_property(seed in 0u64..10_000, n in 1usize..=4, r in 0.0f64..1.0, ds in 0.0f64..1.0, dt in 0.0f64..1.0) {
        let sys = random_system(seed, n, 1);
        let ctrl = random_control(seed, 1, 3, 0.8);
        let (s, t) = (r + ds, r + ds + dt);
        let lhs = principal_matrix(&sys, &ctrl, t, s).unwrap() * principal_matrix(&sys, &ctrl, s, r).unwrap();
        let rhs = principal_matrix(&sys, &ctrl, t, r).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        let inv = principal_matrix(&sys, &ctrl, r, t).unwrap();
        prop_assert!((&inv * &rhs - DMatrix::identity(n, n)).norm() <= 1e-10 * (1.0 + inv.norm() * rhs.norm()));
    }

    #[test]
    fn period_doubling(seed in 0u64..10_000, n in 1usize..=4) {
        let sys = random_system(seed, n, 1);
        let ctrl = random_control(seed, 1, 3, 1.0);
        let phi = period_map(&sys, &ctrl).unwrap().linear;
        let phi2 = period_map(&sys, &ctrl.repeated(2)).unwrap().linear;
        prop_assert!((&phi * &phi - &phi2).norm() <= 1e-10 * (1.0 + phi2.norm()));
        let tol = FloquetTolerances::default();
        let d1 = FloquetData::from_monodromy(&phi, 1.0, &tol).unwrap();
        let d2 = FloquetData::from_monodromy(&phi2, 2.0, &tol).unwrap();
        for (a, b) in d1.exponents.iter().zip(&d2.exponents) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn monodromy_matches_ode_oracle(seed in 0u64..10_000, n in 1usize..=4) {
        let sys = random_system(seed, n, 1);
        let ctrl = random_control(seed + 7, 1, 4, 1.3);
        let phi = period_map(&sys, &ctrl).unwrap().linear;
        let oracle = ode_principal(&sys, &ctrl, ctrl.period());
        prop_assert!((&phi - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
    }

    #[test]
    fn forced_integral_matches_ode_oracle(seed in 0u64..10_000, n in 1usize..=4, m in 1usize..=2) {
        let sys = random_system(seed, n, m);
        let ctrl = random_control(seed + 3, m, 3, 1.2);
        let b = forced_integral(&sys, &ctrl).unwrap();
        let oracle = ode_solution(&sys, &ctrl, &DVector::zeros(n), ctrl.period());
        prop_assert!((&b - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
    }

    #[test]
    fn unique_periodic_solutions_close_up(seed in 0u64..10_000, n in 1usize..=4) {
        let sys = random_system(seed, n, 1);
        let ctrl = random_control(seed + 11, 1, 3, 1.0);
        let tol = FloquetTolerances::default();
        let (_, data) = floquet_of(&sys, &ctrl, &tol).unwrap();
        prop_assume!(data.margin > 1e-3);
        let sol = periodic_solution(&sys, &ctrl, &tol).unwrap();
        let PeriodicSolution::Unique { x0 } = sol else {
            return Err(TestCaseError::fail("expected a unique solution"));
        };
        let end = simulate(&sys, &ctrl, &x0, ctrl.period(), &SimOptions::default()).unwrap();
        prop_assert!((end.endpoint() - &x0).norm() <= 1e-8 * (1.0 + x0.norm()));
        let shot = ode_solution(&sys, &ctrl, &x0, ctrl.period());
        prop_assert!((shot - &x0).norm() <= 1e-6 * (1.0 + x0.norm()));
    }

    #[test]
    fn multipliers_are_reciprocal_under_time_reversal(seed in 0u64..10_000, n in 1usize..=3) {
        let sys = random_system(seed, n, 1);
        let ctrl = random_control(seed, 1, 2, 0.7);
        let phi = principal_matrix(&sys, &ctrl, ctrl.period(), 0.0).unwrap();
        let back = principal_matrix(&sys, &ctrl, 0.0, ctrl.period()).unwrap();
        let det = phi.determinant() * back.determinant();
        prop_assert!((det - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn scan_is_deterministic_and_seed_independent_in_verdict() {
    let sys = catalog::example_5_9();
    let sampler = ControlSampler::default();
    let tol = FloquetTolerances::default();
    let a = hyperbolicity_scan(&sys, &sampler, 100, 5, &tol).unwrap();
    let b = hyperbolicity_scan(&sys, &sampler, 100, 5, &tol).unwrap();
    assert_eq!(a.margins, b.margins);
    assert_eq!(a.argmin_control, b.argmin_control);
    for seed in [0, 1, 2, 99] {
        let r = hyperbolicity_scan(&sys, &sampler, 100, seed, &tol).unwrap();
        assert_eq!(r.verdict, ScanVerdict::NotRefuted);
        let tau_min = sampler.period.0;
        assert!(r.min_margin >= 1.0 - (-tau_min).exp() - 1e-12);
    }
}

#[test]
fn scan_with_critical_control_is_refuted() {
    let sys = catalog::example_7_12();
    let sampler = ControlSampler {
        extra: vec![PiecewiseControl::constant(uvec(-0.5), 1.3).unwrap()],
        ..ControlSampler::default()
    };
    let r = hyperbolicity_scan(&sys, &sampler, 50, 0, &FloquetTolerances::default()).unwrap();
    assert_eq!(r.verdict, ScanVerdict::Refuted);
    assert_eq!(r.argmin, 0);
    assert!(r.min_margin <= 1e-10);
}

#[test]
fn example_7_14_critical_control_is_obstructed() {
    let sys = catalog::example_7_14(1.1, 0.5);
    let ctrl = PiecewiseControl::constant(uvec(-1.0), 1.0).unwrap();
    let sol = periodic_solution(&sys, &ctrl, &FloquetTolerances::default()).unwrap();
    assert!(matches!(sol, PeriodicSolution::Obstructed { .. }), "{sol:?}");
}

#[test]
fn continuation_through_critical_control_blows_up() {
    let sys = catalog::example_7_12();
    let u = PiecewiseControl::constant(uvec(-0.6), 1.0).unwrap();
    let v = PiecewiseControl::constant(uvec(-0.3), 1.0).unwrap();
    let run = continuation(&sys, &concat_path(&u, &v), &ContinuationOptions::default()).unwrap();
    assert_eq!(run.crossings.len(), 1);
    let (lo, hi) = run.crossings[0];
    assert!((lo - 0.25).abs() < 1e-6 && (hi - 0.25).abs() < 1e-6, "{lo} {hi}");
    let big = run.blow_up(1e3);
    assert!(big.len() >= 4);
    let diag = DVector::from_vec(vec![1.0, 1.0]).normalize();
    for r in big {
        assert!(r.kernel_angle.unwrap() <= 0.05);
        let dir = r.kernel_direction.as_ref().unwrap();
        let d = (dir - &diag).norm().min((dir + &diag).norm());
        assert!(d <= 0.02);
    }
    // norms grow towards the crossing from both sides
    let left: Vec<f64> = run.records.iter().filter(|r| r.alpha < lo).filter_map(|r| r.norm_x).collect();
    assert!(left.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
}

#[test]
fn perturbation_ladder_converges() {
    let sys = random_system(17, 3, 1);
    let base = random_control(17, 1, 3, 1.0);
    let horizon = 2.0;
    let mut last_gap = f64::INFINITY;
    for k in 1..=4 {
        let eps = 10f64.powi(-k);
        // shift the first switching time by eps
        let mut segs = base.segments().to_vec();
        let dur0 = segs[0].duration;
        segs[0].duration = dur0 - eps;
        segs[1].duration += eps;
        let pert = PiecewiseControl::new(segs).unwrap();
        let l1 = l1_distance(&base, &pert, horizon);
        assert!(l1 > 0.0 && l1 <= 4.0 * eps);
        let gap = sup_principal_gap(&sys, &base, &pert, horizon, 21).unwrap();
        let env = gronwall_envelope(&sys, &base, &pert, horizon).unwrap();
        assert!(gap <= env, "gap {gap} envelope {env}");
        assert!(gap < last_gap);
        last_gap = gap;
    }
}

#[test]
fn lyapunov_estimate_converges_to_floquet_exponent() {
    let sys = catalog::example_5_9();
    let ctrl = PiecewiseControl::from_pairs(&[(vec![1.0], 0.3), (vec![-1.0], 0.5)]).unwrap();
    let (_, data) = floquet_of(&sys, &ctrl, &FloquetTolerances::default()).unwrap();
    let top = data.exponents[0];
    let x = DVector::from_vec(vec![0.3, 1.0]);
    let mut prev = f64::INFINITY;
    for k in [5usize, 20, 80, 320] {
        let t = k as f64 * ctrl.period();
        let err = (lyapunov_estimate(&sys, &ctrl, &x, t).unwrap() - top).abs();
        assert!(err <= prev + 1e-12);
        assert!(err * t <= 2.0, "k {k}: {err}");
        prev = err;
    }
}

#[test]
fn zero_crossings_of_example_7_13_approach_half() {
    let mut prev = (f64::NEG_INFINITY, f64::INFINITY);
    for eps in [0.05, 0.01, 0.002] {
        let sys = catalog::example_7_13(eps);
        let u1 = eigenvalue_zero_crossing(&sys, 0, -1.0, 0.0).unwrap().unwrap();
        let u2 = eigenvalue_zero_crossing(&sys, 1, 0.0, 1.0).unwrap().unwrap();
        let exact = 1.0 / (4.0 + 2.0 * eps).sqrt();
        assert!((u1 + exact).abs() < 1e-10 && (u2 - exact).abs() < 1e-10);
        assert!((u1 + 0.5).abs() < (prev.0 + 0.5).abs());
        assert!((u2 - 0.5).abs() < (prev.1 - 0.5).abs());
        prev = (u1, u2);
    }
}
