mod common;

use std::f64::consts::PI;

use common::{spec, steady, sup_diff};
use subdiff_core::caputo::SpaceTimeField;
use subdiff_core::coeffs::FnReaction;
use subdiff_core::forward::{solve_all, solve_forward, solve_linear, solve_sensitivity, Excitation, ProblemSpec, Source};
use subdiff_core::mesh::{BoundaryKind, BoundarySpec, Field, Grid1D, TimeGrid};
use subdiff_core::Real;

fn heat_spec(m: usize, n: usize, horizon: f64) -> ProblemSpec<f64> {
    spec(1.0, m, n, horizon, BoundarySpec::dirichlet(), |g| {
        vec![steady(g, |_| 0.0, |x| (PI * x).sin())]
    })
}

#[test]
fn heat_equation_matches_separable_solution() {
    for (m, n) in [(20, 50), (50, 100), (100, 400)] {
        let spec = heat_spec(m, n, 1.0);
        let zero = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
        let u = solve_forward(&spec, &Field::zeros(m + 1), &zero, 0).unwrap();
        let exact = spec.grid().sample(|x| (-PI * PI).exp() * (PI * x).sin());
        let err = sup_diff(u.final_snapshot(), &exact);
        let dt = 1.0 / n as f64;
        let dx = 1.0 / m as f64;
        assert!(err <= 5.0 * (dt + dx * dx), "m = {m}, n = {n}: {err:e}");
    }
}

#[test]
fn initial_and_boundary_values() {
    let spec = heat_spec(20, 10, 0.1);
    let f = FnReaction::new(|u: f64| u * u * u, |u: f64| 3.0 * u * u);
    let q = Field::constant(21, 2.0);
    let h = solve_forward(&spec, &q, &f, 0).unwrap();
    assert_eq!(h.snapshot(0), &spec.excitations()[0].initial);
    for s in h.snapshots().iter().skip(1) {
        assert_eq!(s[0], 0.0);
        assert_eq!(s[20], 0.0);
    }
}

#[test]
fn unknown_excitation_rejected() {
    let spec = heat_spec(10, 5, 0.1);
    let f = FnReaction::new(|u: f64| u, |_| 1.0);
    assert!(solve_forward(&spec, &Field::zeros(11), &f, 1).is_err());
    assert!(solve_forward(&spec, &Field::zeros(7), &f, 0).is_err());
}

#[test]
fn spec_rejects_three_excitations() {
    let grid = Grid1D::new(1.0_f64, 8).unwrap();
    let times = TimeGrid::new(1.0, 4).unwrap();
    let ex = steady(&grid, |_| 1.0, |_| 0.0);
    assert!(ProblemSpec::new(0.5, grid, times, BoundarySpec::neumann(), vec![ex.clone(); 3]).is_err());
    assert!(ProblemSpec::new(0.5, grid, times, BoundarySpec::neumann(), vec![]).is_err());
}

#[test]
fn zero_reaction_agrees_with_linear_solver() {
    for alpha in [0.4, 1.0] {
        let bc = BoundarySpec::new(BoundaryKind::Impedance(1.5), BoundaryKind::Neumann).unwrap();
        let spec = spec(alpha, 30, 40, 1.0, bc, |g| vec![steady(g, |x| 1.0 + x * x, |_| 0.0)]);
        let zero = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
        let a = solve_forward(&spec, &Field::zeros(31), &zero, 0).unwrap();
        let r = spec.grid().sample(|x| 1.0 + x * x);
        let b = solve_linear(&spec, |_| vec![0.0; 31], |_| r.0.clone()).unwrap();
        for n in 0..=40 {
            assert!(sup_diff(a.snapshot(n), b.snapshot(n)) < 1e-12);
        }
    }
}

#[test]
fn linear_reaction_agrees_with_linear_solver() {
    let spec = spec(0.6, 25, 30, 1.0, BoundarySpec::neumann(), |g| vec![steady(g, |x| 2.0 - x, |_| 0.0)]);
    let q = spec.grid().sample(|x| 1.0 + x);
    let f = FnReaction::new(|u: f64| 3.0 * u, |_: f64| 3.0);
    let a = solve_forward(&spec, &q, &f, 0).unwrap();
    let r = spec.grid().sample(|x| 2.0 - x);
    let c: Vec<f64> = q.iter().map(|v| 3.0 * v).collect();
    let b = solve_linear(&spec, |_| c.clone(), |_| r.0.clone()).unwrap();
    assert!(sup_diff(a.final_snapshot(), b.final_snapshot()) < 1e-10);
}

fn manufactured_error(alpha: f64, m: usize, n: usize) -> f64 {
    let grid = Grid1D::new(1.0_f64, m).unwrap();
    let times = TimeGrid::new(1.0, n).unwrap();
    let q = |x: f64| 1.0 + x;
    let exact = |x: f64, t: f64| (1.0 + t * t) * (PI * x).sin();
    let g3 = Real::gamma(3.0 - alpha);
    let r = SpaceTimeField::from_fn(grid, times, |x, t| {
        let u = exact(x, t);
        2.0 * t.powf(2.0 - alpha) / g3 * (PI * x).sin() + PI * PI * u + q(x) * u * u * u
    });
    let ex = Excitation {
        source: Source::Sampled(r),
        initial: grid.sample(|x| exact(x, 0.0)),
    };
    let spec = ProblemSpec::new(alpha, grid, times, BoundarySpec::dirichlet(), vec![ex]).unwrap();
    let f = FnReaction::new(|u: f64| u * u * u, |u: f64| 3.0 * u * u);
    let u = solve_forward(&spec, &grid.sample(q), &f, 0).unwrap();
    sup_diff(u.final_snapshot(), &grid.sample(|x| exact(x, 1.0)))
}

#[test]
fn manufactured_cubic_reaction_is_accurate() {
    for alpha in [0.5, 0.9] {
        let e = manufactured_error(alpha, 80, 400);
        assert!(e < 2e-3, "alpha = {alpha}: {e:e}");
    }
}

#[test]
fn linearization_remainder_is_quadratic() {
    let spec = spec(0.5, 30, 40, 1.0, BoundarySpec::neumann(), |g| {
        vec![steady(g, |x| 3.0 + x, |x| 0.5 * x)]
    });
    let q = spec.grid().sample(|x| 1.0 + x * (1.0 - x));
    let f = FnReaction::new(|u: f64| u + u * u / 2.0, |u: f64| 1.0 + u);
    let dq = spec.grid().sample(|x| (PI * x).cos());
    let df = FnReaction::new(|u: f64| (u / 2.0).sin(), |u: f64| (u / 2.0).cos() / 2.0);
    let base = solve_forward(&spec, &q, &f, 0).unwrap();
    let du = solve_sensitivity(&spec, &q, &f, &base, &dq, &df).unwrap();
    let remainder = |eps: f64| {
        let qe = q.zip_map(&dq, |a, b| a + eps * b);
        let fe = FnReaction::new(
            move |u: f64| u + u * u / 2.0 + eps * (u / 2.0).sin(),
            move |u: f64| 1.0 + u + eps * (u / 2.0).cos() / 2.0,
        );
        let ue = solve_forward(&spec, &qe, &fe, 0).unwrap();
        let lin: Vec<f64> = base
            .final_snapshot()
            .iter()
            .zip(du.final_snapshot().iter())
            .map(|(a, b)| a + eps * b)
            .collect();
        sup_diff(ue.final_snapshot(), &lin)
    };
    let (r1, r2) = (remainder(1e-2), remainder(5e-3));
    let order = (r1 / r2).log2();
    assert!((order - 2.0).abs() < 0.3, "remainder order {order}");
}

#[test]
fn zero_perturbation_gives_zero_sensitivity() {
    let spec = heat_spec(10, 5, 0.1);
    let f = FnReaction::new(|u: f64| u, |_| 1.0);
    let q = Field::constant(11, 1.0);
    let base = solve_forward(&spec, &q, &f, 0).unwrap();
    let zero = FnReaction::new(|_: f64| 0.0, |_| 0.0);
    let du = solve_sensitivity(&spec, &q, &f, &base, &Field::zeros(11), &zero).unwrap();
    assert!(du.snapshots().iter().all(|s| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn solve_all_matches_individual_solves() {
    let spec = common::two_source_spec(0.7, 20, 20, 4.0, 1.0);
    let q = spec.grid().sample(|x| 1.0 + x);
    let f = FnReaction::new(|u: f64| u.exp(), |u: f64| u.exp());
    let all = solve_all(&spec, &q, &f).unwrap();
    assert_eq!(all.len(), 2);
    for (i, s) in all.iter().enumerate() {
        assert_eq!(s, &solve_forward(&spec, &q, &f, i).unwrap());
    }
}

#[test]
fn single_precision_tracks_double() {
    let g64 = Grid1D::new(1.0_f64, 20).unwrap();
    let t64 = TimeGrid::new(0.5, 20).unwrap();
    let e64 = Excitation {
        source: Source::Steady(g64.sample(|_| 1.0)),
        initial: g64.sample(|x| (PI * x).sin()),
    };
    let s64 = ProblemSpec::new(0.5, g64, t64, BoundarySpec::dirichlet(), vec![e64]).unwrap();
    let f64r = FnReaction::new(|u: f64| u * u, |u: f64| 2.0 * u);
    let u64 = solve_forward(&s64, &Field::constant(21, 1.0), &f64r, 0).unwrap();

    let g32 = Grid1D::new(1.0_f32, 20).unwrap();
    let t32 = TimeGrid::new(0.5_f32, 20).unwrap();
    let e32 = Excitation {
        source: Source::Steady(g32.sample(|_| 1.0)),
        initial: g32.sample(|x| (std::f32::consts::PI * x).sin()),
    };
    let s32 = ProblemSpec::new(0.5_f32, g32, t32, BoundarySpec::dirichlet(), vec![e32]).unwrap();
    let f32r = FnReaction::new(|u: f32| u * u, |u: f32| 2.0 * u);
    let u32 = solve_forward(&s32, &Field::constant(21, 1.0_f32), &f32r, 0).unwrap();
    for (a, b) in u64.final_snapshot().iter().zip(u32.final_snapshot().iter()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
