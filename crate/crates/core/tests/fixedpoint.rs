mod common;

use common::sup_diff;
use proptest::prelude::*;
use subdiff_core::coeffs::{FnReaction, HatBasis, Nonlinearity, Reaction};
use subdiff_core::fixedpoint::{
    equation_weights, fxp_b_f_system, fxp_b_iterate, fxp_b_map, fxp_b_overall_step, fxp_b_q_update, fxp_c_f_update,
    fxp_c_iterate, fxp_c_q_update, log_residuals, solve_log_pair, FUpdateMode, FxpBSetup, FxpCConfig, FxpCSetup,
    FxpConfig, FxpVariant, InitialGuess, LogPair, QUpdateMode,
};
use subdiff_core::forward::{solve_all, solve_forward, ProblemSpec};
use subdiff_core::linalg::{lstsq, Matrix};
use subdiff_core::mesh::{trapezoid_weights, BoundaryKind, BoundarySpec, Grid1D};
use subdiff_core::observe::{observe, ObservationSite};
use subdiff_core::trace::Truth;

fn case_b_spec() -> ProblemSpec<f64> {
    let bc = BoundarySpec {
        left: BoundaryKind::Dirichlet,
        right: BoundaryKind::Neumann,
    };
    common::spec(0.5, 100, 200, 1.0, bc, |g| {
        vec![common::steady(g, |_| 40.0, |_| 0.0), common::steady(g, |_| 10.0, |_| 0.0)]
    })
}

/// Truth in the ansatz space: `q = 10 e^{−x/2}` and `f = e^{u/2}` interpolated in log form.
fn case_b_truth(spec: &ProblemSpec<f64>) -> (FxpBSetup<f64>, LogPair<f64>) {
    let probe = LogPair::anchored(
        HatBasis::spatial(1.0, 10, Some(0.5)).unwrap(),
        10.0 * (-0.25_f64).exp(),
        HatBasis::state(0.0, 1.0, 10, 0.0, Some(0.0)).unwrap(),
        1.0,
    )
    .unwrap();
    let states = solve_all(spec, &spec.grid().sample(|x| 10.0 * (-x / 2.0).exp()), &FnReaction::new(
        |u: f64| (u / 2.0).exp(),
        |u: f64| (u / 2.0).exp() / 2.0,
    ))
    .unwrap();
    let (lo, hi) = states
        .iter()
        .flat_map(|s| s.final_snapshot().0.clone())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let setup = FxpBSetup {
        q_basis: probe.q.basis().clone(),
        f_basis: HatBasis::state(lo, hi, 15, 0.05, Some(0.0)).unwrap(),
        q_bar: 10.0 * (-0.25_f64).exp(),
        f0: 1.0,
    };
    let mut pair = LogPair::anchored(setup.q_basis.clone(), setup.q_bar, setup.f_basis.clone(), setup.f0).unwrap();
    let qb = &setup.q_basis;
    let a = (0..qb.len())
        .map(|k| -qb.knot(qb.knot_of(k)) / 2.0 + 0.25)
        .collect();
    let fb = &setup.f_basis;
    let b = (0..fb.len()).map(|k| fb.knot(fb.knot_of(k)) / 2.0).collect();
    pair.q = pair.q.with_coeffs(a).unwrap();
    pair.f = pair.f.with_coeffs(b).unwrap();
    (setup, pair)
}

#[test]
fn log_residuals_at_truth_equal_log_of_reaction() {
    let spec = case_b_spec();
    let q = spec.grid().sample(|x| 1.0 + x);
    let f = FnReaction::new(|u: f64| 1.0 + u * u, |u: f64| 2.0 * u);
    let states = solve_all(&spec, &q, &f).unwrap();
    for (i, s) in states.iter().enumerate() {
        let g = s.final_snapshot();
        let r = spec.excitations()[i].source.final_value();
        let lr = log_residuals(&spec, s, g, r, 1e-12).unwrap();
        assert_eq!(lr.clamp_count(), 0);
        let expect: Vec<f64> = g.iter().zip(q.iter()).map(|(&u, &qj)| (qj * f.eval(u)).ln()).collect();
        // the Dirichlet row carries no equation
        assert!(sup_diff(&lr.values[1..], &expect[1..]) < 1e-9);
    }
}

#[test]
fn log_floor_clamps_vanishing_source() {
    let spec = common::two_source_spec(0.5, 20, 20, 0.0, 0.0);
    let zero = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
    let states = solve_all(&spec, &spec.grid().sample(|_| 1.0), &zero).unwrap();
    let g = states[0].final_snapshot();
    let lr = log_residuals(&spec, &states[0], g, spec.excitations()[0].source.final_value(), 1e-12).unwrap();
    assert_eq!(lr.clamp_count(), 21);
    assert!(lr.values.iter().all(|&v| v == 1e-12_f64.ln()));
}

#[test]
fn equation_weights_drop_dirichlet_ends() {
    let spec = common::spec(0.5, 10, 4, 1.0, BoundarySpec::dirichlet(), |g| {
        vec![common::steady(g, |_| 1.0, |_| 0.0)]
    });
    let w = equation_weights(&spec);
    assert_eq!(w[0], 0.0);
    assert_eq!(w[10], 0.0);
    assert!(w[1..10].iter().all(|&v| (v - 0.1).abs() < 1e-15));
    let spec = common::two_source_spec(0.5, 10, 4, 1.0, 1.0);
    assert_eq!(equation_weights(&spec), trapezoid_weights(11, 0.1));
}

#[test]
fn f_system_recovers_representable_difference() {
    let grid = Grid1D::new(1.0_f64, 40).unwrap();
    let g1 = grid.sample(|x| x);
    let g2 = grid.sample(|x| x / 2.0 + 0.25);
    let basis = HatBasis::state(0.0, 1.0, 8, 0.0, Some(0.0)).unwrap();
    let b: Vec<f64> = (0..basis.len()).map(|k| (k as f64 * 0.7).sin()).collect();
    let ft = |s: f64| basis.value(&b, s);
    let diff: Vec<f64> = g1.iter().zip(g2.iter()).map(|(&u, &v)| ft(u) - ft(v)).collect();
    let w = trapezoid_weights(41, grid.dx());
    let got = fxp_b_f_system(&diff, &g1, &g2, &basis, &w, 0.0_f64.max(1e-14)).unwrap();
    assert!(sup_diff(&got, &b) < 1e-8, "{got:?}");
}

#[test]
fn q_update_projects_representable_target() {
    let grid = Grid1D::new(1.0_f64, 40).unwrap();
    let basis = HatBasis::spatial(1.0, 8, Some(0.5)).unwrap();
    let a: Vec<f64> = (0..basis.len()).map(|k| 0.1 * k as f64 - 0.3).collect();
    let x = grid.nodes();
    let target: Vec<f64> = x.iter().map(|&xj| 2.0 + basis.value(&a, xj)).collect();
    let w = trapezoid_weights(41, grid.dx());
    let got = fxp_b_q_update(&target, 2.0, &basis, &x, &w, 1e-14).unwrap();
    assert!(sup_diff(&got, &a) < 1e-10);
}

#[test]
fn overall_step_matches_stacked_least_squares() {
    let grid = Grid1D::new(1.0_f64, 30).unwrap();
    let x = grid.nodes();
    let g1 = grid.sample(|x| x);
    let g2 = grid.sample(|x| x / 2.0 + 0.25);
    let qb = HatBasis::spatial(1.0, 5, Some(0.6)).unwrap();
    let fb = HatBasis::state(0.0, 1.0, 6, 0.0, Some(0.0)).unwrap();
    let w = trapezoid_weights(31, grid.dx());
    let r1: Vec<f64> = x.iter().map(|&t| (3.0 * t).sin()).collect();
    let r2: Vec<f64> = x.iter().map(|&t| t * t - 0.2).collect();
    let (a, b) = fxp_b_overall_step([&r1, &r2], [&g1, &g2], &qb, &fb, &x, &w, 1e-14).unwrap();

    let (m, n) = (qb.len(), fb.len());
    let mut design = Matrix::zeros(62, m + n);
    let mut rhs = vec![0.0; 62];
    for (blk, (g, r)) in [(&g1, &r1), (&g2, &r2)].into_iter().enumerate() {
        for j in 0..31 {
            let row = blk * 31 + j;
            let sw = w[j].sqrt();
            for k in 0..m {
                design[(row, k)] = sw * qb.phi(k, x[j]);
            }
            for k in 0..n {
                design[(row, m + k)] = sw * fb.phi(k, g[j]);
            }
            rhs[row] = sw * r[j];
        }
    }
    let oracle = lstsq(&design, &rhs).unwrap();
    assert!(sup_diff(&a, &oracle[..m]) < 1e-8);
    assert!(sup_diff(&b, &oracle[m..]) < 1e-8);
}

#[test]
fn case_b_iteration_converges_to_ansatz_truth() {
    let spec = case_b_spec();
    let (setup, truth_pair) = case_b_truth(&spec);
    let states = solve_log_pair(&spec, &truth_pair).unwrap();
    let data = observe(&states, &ObservationSite::FinalTime).unwrap();
    let truth_f = truth_pair.reaction();
    let truth = Truth {
        q: truth_pair.q_nodal(&spec),
        f: &truth_f,
        f_range: (setup.f_basis.lo(), setup.f_basis.hi()),
    };
    let f0 = FnReaction::new(|u: f64| 4.0 * u, |_: f64| 4.0);
    let init = InitialGuess {
        q: spec.grid().sample(|_| 0.0),
        f: &f0,
    };
    for variant in [FxpVariant::Overall, FxpVariant::Split] {
        let cfg = FxpConfig {
            variant,
            max_iter: 12,
            ..FxpConfig::default()
        };
        let out = fxp_b_iterate(&spec, &data, &setup, &init, &cfg, Some(&truth)).unwrap();
        assert!(out.trace.failure.is_none(), "{:?}", out.trace.failure);
        let (eq, ef) = out.trace.relative_errors(out.trace.last().unwrap().iteration).unwrap();
        assert!(eq < 1e-6 && ef < 1e-6, "{variant:?}: {eq:e} {ef:e}");
    }
}

#[test]
fn case_b_anchors_hold_at_every_iterate() {
    let spec = case_b_spec();
    let (setup, truth_pair) = case_b_truth(&spec);
    let states = solve_log_pair(&spec, &truth_pair).unwrap();
    let g: Vec<_> = states.iter().map(|s| s.final_snapshot().clone()).collect();
    let mut pair = LogPair::anchored(setup.q_basis.clone(), setup.q_bar, setup.f_basis.clone(), setup.f0).unwrap();
    let cfg = FxpConfig::default();
    for _ in 0..6 {
        pair = fxp_b_map(&spec, &g, &setup, &pair, &cfg).unwrap().pair;
        assert_eq!(pair.q.eval(0.5), setup.q_bar.ln());
        assert_eq!(pair.f.eval(0.0), setup.f0.ln());
        assert!((pair.q_at(0.5) - setup.q_bar).abs() <= 4.0 * f64::EPSILON * setup.q_bar);
    }
}

fn case_c_spec(m: usize, n: usize) -> ProblemSpec<f64> {
    common::spec(0.5, m, n, 1.0, BoundarySpec::neumann(), |g| {
        vec![common::steady(g, |x| 1.0 + 4.0 * x, |_| 0.0)]
    })
}

#[test]
fn direct_and_incremental_f_updates_agree() {
    let spec = case_c_spec(40, 40);
    let q = spec.grid().sample(|x| 0.5 + x * (1.0 - x));
    let f_true = FnReaction::new(|u: f64| 1.0 + u + u * u / 2.0, |u: f64| 1.0 + u);
    let data_state = solve_forward(&spec, &q, &f_true, 0).unwrap();
    let h = data_state.trace(40);
    let lo = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let basis = HatBasis::state(lo, hi, 8, 0.05, None).unwrap();
    let fk = Nonlinearity::interpolate(basis, |u| 2.0 + 0.5 * u).unwrap();
    let other = solve_forward(&spec, &q, &fk, 0).unwrap();
    let q1 = q[40];
    let d = fxp_c_f_update(&spec, &h, &other, 40, q1, &fk, FUpdateMode::Direct, true, 1e-12).unwrap();
    let i = fxp_c_f_update(&spec, &h, &other, 40, q1, &fk, FUpdateMode::Incremental, true, 1e-12).unwrap();
    // hats the trace never reaches are left to the ridge and may differ
    for &s in &h[1..] {
        assert!((d.eval(s) - i.eval(s)).abs() < 1e-8, "s = {s}");
    }
}

#[test]
fn q_update_keeps_trace_anchor() {
    let spec = case_c_spec(40, 40);
    let q = spec.grid().sample(|x| 0.5 + x * (1.0 - x));
    let f = FnReaction::new(|u: f64| 1.0 + u, |_: f64| 1.0);
    let state = solve_forward(&spec, &q, &f, 0).unwrap();
    let g = state.final_snapshot();
    let r = spec.excitations()[0].source.final_value();
    let basis = HatBasis::spatial(1.0, 10, Some(1.0)).unwrap();
    let p = fxp_c_q_update(&spec, &state, g, r, &f, &basis, 0.5, QUpdateMode::Projected, 1e-12, 1e-12).unwrap();
    assert_eq!(p.eval(1.0), 0.5);
    let d = fxp_c_q_update(&spec, &state, g, r, &f, &basis, 0.5, QUpdateMode::Division, 1e-12, 1e-12).unwrap();
    assert!(sup_diff(&d.nodal(spec.grid()), &q) < 1e-9);
    let vanish = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
    assert!(fxp_c_q_update(&spec, &state, g, r, &vanish, &basis, 0.5, QUpdateMode::Division, 1e-12, 1e-12).is_err());
}

#[test]
fn case_c_iteration_reduces_errors() {
    let spec = case_c_spec(100, 200);
    let q_true = spec.grid().sample(|x| 0.5 + x * (1.0 - x));
    let f_true = FnReaction::new(|u: f64| 1.0 + u + u * u / 2.0, |u: f64| 1.0 + u);
    let states = solve_all(&spec, &q_true, &f_true).unwrap();
    let data = observe(&states, &ObservationSite::Mixed(1.0)).unwrap();
    let g = states[0].final_snapshot();
    let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let f_basis = HatBasis::state(lo, hi, 15, 0.05, None).unwrap();
    let setup = FxpCSetup {
        q_basis: HatBasis::spatial(1.0, 10, Some(1.0)).unwrap(),
        f_basis: f_basis.clone(),
        q1: 0.5,
    };
    let q0 = spec.grid().sample(|_| 0.5);
    let f0 = Nonlinearity::interpolate(f_basis, |u| 4.0 * u).unwrap();
    let truth = Truth {
        q: q_true,
        f: &f_true,
        f_range: (lo, hi),
    };
    let cfg = FxpCConfig {
        max_iter: 40,
        ..FxpCConfig::default()
    };
    let out = fxp_c_iterate(&spec, &data, &setup, &q0, &f0, &cfg, Some(&truth)).unwrap();
    assert!(out.trace.failure.is_none(), "{:?}", out.trace.failure);
    assert_eq!(out.q.eval(1.0), 0.5);
    let (eq, ef) = out.trace.relative_errors(out.trace.last().unwrap().iteration).unwrap();
    assert!(eq < 0.05 && ef < 0.05, "{eq} {ef}");
    assert!(out.range_margin.unwrap() >= -1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn f_system_is_invariant_to_constant_shift(
        b in prop::collection::vec(-1.0..1.0_f64, 8),
        c in -3.0..3.0_f64,
    ) {
        // constants cancel in the excitation difference
        let grid = Grid1D::new(1.0_f64, 30).unwrap();
        let g1 = grid.sample(|x| x);
        let g2 = grid.sample(|x| x / 2.0 + 0.25);
        let basis = HatBasis::state(0.0, 1.0, 8, 0.0, Some(0.0)).unwrap();
        let ft = |s: f64| basis.value(&b, s) + c;
        let diff: Vec<f64> = g1.iter().zip(g2.iter()).map(|(&u, &v)| ft(u) - ft(v)).collect();
        let w = trapezoid_weights(31, grid.dx());
        let got = fxp_b_f_system(&diff, &g1, &g2, &basis, &w, 1e-14).unwrap();
        prop_assert!(sup_diff(&got, &b) < 1e-7);
    }
}
