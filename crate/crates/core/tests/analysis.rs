mod common;

use std::f64::consts::PI;

use common::sup_diff;
use proptest::prelude::*;
use subdiff_core::analysis::{
    decay_check, estimate_contraction, psi_apply, psi_invert, psi_lin, psi_lin_invert, s_operator, w1_inf_norm,
    ContractionSetup, OperatorTag, PsiContext, PsiIterConfig,
};
use subdiff_core::coeffs::{FnReaction, HatBasis, Reaction};
use subdiff_core::fixedpoint::LogPair;
use subdiff_core::forward::{solve_all, solve_forward, ProblemSpec};
use subdiff_core::mesh::{BoundarySpec, Field, Grid1D};

/// `g¹ = x`, `g² = x/2 + 1/4` with `f(0) = 1`; the slope ratio is 2 and the profiles cross at 1/2.
fn linear_pair(m: usize) -> PsiContext<f64> {
    let grid = Grid1D::new(1.0_f64, m).unwrap();
    let g1 = grid.sample(|x| x);
    let g2 = grid.sample(|x| x / 2.0 + 0.25);
    PsiContext::new(grid, g1, g2, 0.0, 1.0).unwrap()
}

#[test]
fn psi_of_exponential_is_profile_difference() {
    let ctx = linear_pair(40);
    let f = FnReaction::new(|u: f64| u.exp(), |u: f64| u.exp());
    let psi = psi_apply(&f, &ctx).unwrap();
    let expect = ctx.grid().sample(|x| x / 2.0 - 0.25);
    assert!(sup_diff(&psi, &expect) < 1e-14);
}

#[test]
fn psi_rejects_nonpositive_reaction() {
    let ctx = linear_pair(10);
    let f = FnReaction::new(|u: f64| u - 0.5, |_: f64| 1.0);
    assert!(psi_apply(&f, &ctx).is_err());
}

#[test]
fn context_checks() {
    let grid = Grid1D::new(1.0_f64, 10).unwrap();
    let g = grid.sample(|x| x);
    assert!(PsiContext::new(grid, g.clone(), g.clone(), 0.0, 1.0).is_err());
    let g2 = grid.sample(|x| x / 2.0 + 0.25);
    assert!(PsiContext::new(grid, g.clone(), g2.clone(), 2.0, 1.0).is_err());
    assert!(PsiContext::new(grid, g, g2, 0.0, 0.0).is_err());
    let ctx = linear_pair(10);
    assert_eq!(ctx.range(), (0.0, 1.0));
    assert_eq!(ctx.anchor(), (0.0, 1.0));
    assert!((ctx.report().c_ratio - 2.0).abs() < 1e-12);
}

#[test]
fn inverse_of_g1_by_bisection() {
    let ctx = linear_pair(20);
    for s in [0.0, 0.13, 0.37, 0.99] {
        assert!((ctx.g1_inverse(s) - s).abs() < 1e-11);
    }
}

#[test]
fn linear_inversion_recovers_identity() {
    let ctx = linear_pair(50);
    let b = ctx.grid().sample(|x| x / 2.0 - 0.25);
    let inv = psi_lin_invert(&b, &ctx, &PsiIterConfig::default()).unwrap();
    assert!(inv.derivative.iter().all(|d| (d - 1.0).abs() < 1e-9));
    for s in [0.0, 0.2, 0.5, 0.8, 1.0] {
        assert!((inv.eval(s) - s).abs() < 1e-9);
        assert!((inv.eval_derivative(s) - 1.0).abs() < 1e-9);
    }
    let ratio = inv.max_ratio().unwrap();
    let bound = 1.0 / ctx.report().c_ratio + 0.05;
    assert!(ratio <= bound, "ratio {ratio}, bound {bound}");
}

#[test]
fn zero_data_gives_zero_preimage() {
    let ctx = linear_pair(20);
    let inv = psi_lin_invert(&Field::zeros(21), &ctx, &PsiIterConfig::default()).unwrap();
    assert!(inv.derivative.iter().all(|&v| v == 0.0));
    assert!(inv.values.iter().all(|&v| v == 0.0));
}

#[test]
fn data_must_vanish_at_crossing() {
    let ctx = linear_pair(20);
    let b = ctx.grid().sample(|x| x);
    assert!(psi_lin_invert(&b, &ctx, &PsiIterConfig::default()).is_err());
}

#[test]
fn iteration_cap_is_reported() {
    let ctx = linear_pair(20);
    let b = ctx.grid().sample(|x| x / 2.0 - 0.25);
    let cfg = PsiIterConfig {
        tolerance: 1e-10,
        max_iter: 3,
    };
    assert!(psi_lin_invert(&b, &ctx, &cfg).is_err());
}

#[test]
fn invert_after_apply_roundtrips() {
    // log f quadratic keeps every difference quotient exact
    let ctx = linear_pair(64);
    let f = FnReaction::new(|u: f64| (u + u * u / 2.0).exp(), |u: f64| (1.0 + u) * (u + u * u / 2.0).exp());
    let b = psi_apply(&f, &ctx).unwrap();
    let (rec, inv) = psi_invert(&b, &ctx, 16, &PsiIterConfig::default()).unwrap();
    assert_eq!(rec.eval(0.0), 1.0);
    let basis = rec.basis().clone();
    for i in 0..=16 {
        let s = basis.knot(i);
        assert!((rec.eval(s) - f.eval(s)).abs() <= 1e-6, "s = {s}");
    }
    assert!(inv.max_ratio().unwrap() <= 0.55);
}

#[test]
fn s_operator_sees_only_the_product() {
    let spec = common::spec(0.5, 30, 30, 1.0, BoundarySpec::dirichlet(), |g| {
        vec![
            common::steady(g, |_| 5.0, |x| (PI * x).sin()),
            common::steady(g, |_| 2.0, |_| 0.0),
        ]
    });
    let q = spec.grid().sample(|x| 1.0 + x);
    let f = FnReaction::new(|u: f64| 1.0 + u * u, |u: f64| 2.0 * u);
    let q2 = q.map(|v| 2.0 * v);
    let f2 = FnReaction::new(|u: f64| (1.0 + u * u) / 2.0, |u: f64| u);
    let g: Vec<Field<f64>> = solve_all(&spec, &q, &f)
        .unwrap()
        .iter()
        .map(|s| s.final_snapshot().clone())
        .collect();
    let a = s_operator(&spec, &q, &f, &g).unwrap();
    let b = s_operator(&spec, &q2, &f2, &g).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(sup_diff(x, y) < 1e-12);
    }
    assert!(s_operator(&spec, &q, &f, &g[..1]).is_err());
}

#[test]
fn s_operator_at_truth_reproduces_reaction() {
    let spec = common::spec(1.0, 40, 40, 0.5, BoundarySpec::dirichlet(), |g| {
        vec![common::steady(g, |_| 3.0, |_| 0.0)]
    });
    let q = spec.grid().sample(|x| 1.0 + x * (1.0 - x));
    let f = FnReaction::new(|u: f64| 1.0 + u, |_: f64| 1.0);
    let states = solve_all(&spec, &q, &f).unwrap();
    let g = vec![states[0].final_snapshot().clone()];
    let s = s_operator(&spec, &q, &f, &g).unwrap();
    let expect: Vec<f64> = g[0].iter().zip(q.iter()).map(|(&u, &qj)| qj * f.eval(u)).collect();
    assert!(sup_diff(&s[0][1..40], &expect[1..40]) < 1e-9);
}

fn free_decay(mode: f64) -> f64 {
    let spec = common::spec(1.0, 100, 1000, 0.5, BoundarySpec::dirichlet(), |g| {
        vec![common::steady(g, |_| 0.0, |x| (mode * PI * x).sin())]
    });
    let zero = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
    let state = solve_forward(&spec, &spec.grid().sample(|_| 0.0), &zero, 0).unwrap();
    decay_check(&state).unwrap()
}

#[test]
fn decay_rate_matches_eigenvalue() {
    for mode in [1.0, 2.0] {
        let lambda = (mode * PI).powi(2);
        let rate = free_decay(mode);
        assert!((rate - lambda).abs() < 0.05 * lambda, "mode {mode}: rate {rate}");
    }
}

#[test]
fn decay_needs_motion() {
    let spec = common::spec(1.0, 10, 20, 1.0, BoundarySpec::dirichlet(), |g| {
        vec![common::steady(g, |_| 0.0, |_| 0.0)]
    });
    let zero = FnReaction::new(|_: f64| 0.0, |_: f64| 0.0);
    let state = solve_forward(&spec, &spec.grid().sample(|_| 0.0), &zero, 0).unwrap();
    assert!(decay_check(&state).is_err());
}

fn contraction_spec(horizon: f64, alpha: f64) -> subdiff_core::Result<ProblemSpec<f64>> {
    Ok(common::spec(alpha, 20, 40, horizon, BoundarySpec::dirichlet(), |g| {
        vec![
            common::steady(g, |_| 0.0, |x| (PI * x).sin()),
            common::steady(g, |_| 0.0, |x| 2.0 * (PI * x).sin()),
        ]
    }))
}

#[test]
fn contraction_ratios_decay_with_horizon() {
    let mut truth = LogPair::anchored(
        HatBasis::spatial(1.0, 5, Some(0.6)).unwrap(),
        1.0,
        HatBasis::state(0.0, 2.0, 6, 0.0, Some(0.0)).unwrap(),
        1.0,
    )
    .unwrap();
    let b: Vec<f64> = (0..truth.f.coeffs().len()).map(|k| 0.1 * (k + 1) as f64).collect();
    truth.f = truth.f.with_coeffs(b).unwrap();
    let setup = ContractionSetup {
        build: &contraction_spec,
        horizons: vec![0.25, 0.5, 1.0],
        alphas: vec![1.0],
        truth,
        radius: 0.05,
        samples: 3,
        seed: 11,
        f_range: (0.0, 2.0),
        map: None,
    };
    let est = estimate_contraction(&setup).unwrap();
    let r = est.ratios(OperatorTag::S, 1.0);
    assert_eq!(r.len(), 3);
    assert!(r.windows(2).all(|p| p[1].1 < p[0].1), "{r:?}");
    assert!(est.rates.iter().any(|(op, rate)| *op == OperatorTag::S && *rate > 0.0));
    assert!(est.to_csv().lines().count() > 3);
    let again = estimate_contraction(&setup).unwrap();
    assert_eq!(again.to_csv(), est.to_csv());
}

#[test]
fn w1_norm_of_tent() {
    let v = [0.0_f64, 0.5, 1.0, 0.5, 0.0];
    assert!((w1_inf_norm(&v, 0.5) - 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_lin_is_linear(a in -3.0..3.0_f64, c1 in -2.0..2.0_f64, c2 in -2.0..2.0_f64) {
        let ctx = linear_pair(25);
        let f1 = |s: f64| c1 * s * s;
        let f2 = |s: f64| (c2 * s).sin();
        let mix = psi_lin(|s| a * f1(s) + f2(s), &ctx);
        let (p1, p2) = (psi_lin(f1, &ctx), psi_lin(f2, &ctx));
        for j in 0..26 {
            prop_assert!((mix[j] - (a * p1[j] + p2[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_lin_kills_constants(c in -5.0..5.0_f64) {
        let ctx = linear_pair(25);
        prop_assert!(psi_lin(|_| c, &ctx).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inversion_is_lipschitz(amp in -0.5..0.5_f64, k in 1usize..4) {
        // perturbations vanish at the crossing x = 1/2
        let ctx = linear_pair(80);
        let b0 = ctx.grid().sample(|x| x / 2.0 - 0.25);
        let db = ctx.grid().sample(|x| amp * (2.0 * k as f64 * PI * (x - 0.5)).sin());
        let b1 = b0.zip_map(&db, |a, b| a + b);
        let cfg = PsiIterConfig::default();
        let i0 = psi_lin_invert(&b0, &ctx, &cfg).unwrap();
        let i1 = psi_lin_invert(&b1, &ctx, &cfg).unwrap();
        let dd = sup_diff(&i0.derivative, &i1.derivative);
        // 1 / (1 − 1/C) = 2, doubled for the one-sided end quotients
        prop_assert!(dd <= 4.0 * w1_inf_norm(&db, ctx.grid().dx()) + 1e-9);
    }

    #[test]
    fn w1_norm_is_a_seminorm_scaled(
        v in prop::collection::vec(-3.0..3.0_f64, 12),
        w in prop::collection::vec(-3.0..3.0_f64, 12),
        c in -4.0..4.0_f64,
    ) {
        let h = 0.1;
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        prop_assert!((w1_inf_norm(&scaled, h) - c.abs() * w1_inf_norm(&v, h)).abs() < 1e-9);
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        prop_assert!(w1_inf_norm(&sum, h) <= w1_inf_norm(&v, h) + w1_inf_norm(&w, h) + 1e-9);
    }
}
