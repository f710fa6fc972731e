use proptest::prelude::*;
use subdiff_core::coeffs::{cutoff, pack, unpack, BasisKind, FnReaction, HatBasis, Nonlinearity, Potential, Reaction};
use subdiff_core::mesh::Grid1D;

#[test]
fn affine_initial_guess() {
    let basis = HatBasis::state(0.0, 1.0, 15, 0.05, None).unwrap();
    let f = Nonlinearity::affine(basis, 0.0, 4.0);
    assert_eq!(f.eval(0.5), 2.0);
    assert_eq!(f.eval_deriv(-3.0), 4.0);
}

#[test]
fn anchored_potential_identity() {
    let basis = HatBasis::spatial(1.0, 20, Some(0.5)).unwrap();
    let q = Potential::new(basis, vec![0.3; 20], 1.7).unwrap();
    assert_eq!(q.eval(0.5), 1.7);
    assert_eq!(q.anchor(), Some((0.5, 1.7)));
}

#[test]
fn anchor_must_be_a_knot() {
    assert!(HatBasis::spatial(1.0_f64, 20, Some(0.51)).is_err());
    assert!(HatBasis::spatial(1.0_f64, 20, Some(0.55)).is_ok());
}

#[test]
fn chord_value_and_left_slope() {
    let basis = HatBasis::new(BasisKind::State, 0.0_f64, 2.0, 2, None).unwrap();
    let f = Nonlinearity::new(basis, vec![0.0, 1.0, 4.0], 0.0, 0.0).unwrap();
    assert!((f.eval(1.5) - 2.5).abs() < 1e-15);
    assert!((f.eval_deriv(1.5) - 3.0).abs() < 1e-15);
    assert!((f.eval_deriv(1.0) - 1.0).abs() < 1e-15);
    assert!((f.lipschitz() - 3.0).abs() < 1e-15);
}

#[test]
fn linear_extension_past_end_knots() {
    let basis = HatBasis::new(BasisKind::State, 0.0_f64, 2.0, 2, None).unwrap();
    let f = Nonlinearity::new(basis, vec![0.0, 1.0, 4.0], 0.0, 0.0).unwrap();
    assert!((f.eval(3.0) - 7.0).abs() < 1e-14);
    assert!((f.eval(-1.0) + 1.0).abs() < 1e-14);
}

#[test]
fn state_anchor_becomes_knot() {
    let b = HatBasis::state(-0.3_f64, 1.2, 15, 0.05, Some(0.0)).unwrap();
    let e = b.excluded().unwrap();
    assert!(b.knot(e).abs() < 1e-14);
    assert!(b.lo() <= -0.3 && b.hi() >= 1.2);
    let b = HatBasis::state(0.0, 1.2, 15, 0.05, Some(0.0)).unwrap();
    assert_eq!(b.excluded(), Some(0));
    assert_eq!(b.lo(), 0.0);
}

#[test]
fn interpolation_hits_knots() {
    let basis = HatBasis::state(-1.0_f64, 2.0, 12, 0.0, None).unwrap();
    let f = Nonlinearity::interpolate(basis.clone(), |u| u.exp()).unwrap();
    for i in 0..=12 {
        let s = basis.knot(i);
        assert!((f.eval(s) - s.exp()).abs() < 1e-13);
    }
    let anchored = HatBasis::state(-1.0_f64, 2.0, 12, 0.0, Some(0.0)).unwrap();
    assert!(Nonlinearity::interpolate(anchored, |u| u).is_err());
}

#[test]
fn pack_layout() {
    let q = Potential::constant(HatBasis::spatial(1.0, 20, Some(0.0)).unwrap(), 1.0);
    let f = Nonlinearity::affine(HatBasis::state(0.0, 1.0, 15, 0.05, Some(0.0)).unwrap(), 0.0, 4.0);
    let v = pack(&q, &f);
    assert_eq!(v.len(), 35);
    let (q2, f2) = unpack(&v, &q, &f).unwrap();
    assert_eq!(q2, q);
    assert_eq!(f2, f);
    assert!(unpack(&v[1..], &q, &f).is_err());
}

#[test]
fn nodal_potential_on_grid() {
    let basis = HatBasis::spatial(1.0_f64, 4, None).unwrap();
    let q = Potential::new(basis, vec![1.0, 2.0, 3.0, 2.0, 1.0], 0.5).unwrap();
    let grid = Grid1D::new(1.0, 8).unwrap();
    let n = q.nodal(&grid);
    assert_eq!(n.0, vec![1.5, 2.0, 2.5, 3.0, 3.5, 3.0, 2.5, 2.0, 1.5]);
}

#[test]
fn cutoff_of_affine_is_identity() {
    let f = cutoff(1.0_f64, 2.0, |_| 0.0, 1.5, 20).unwrap();
    for u in [-5.0, -1.0, 0.0, 0.3, 2.4, 7.0] {
        assert!((f.eval(u) - (1.0 + 2.0 * u)).abs() < 1e-12);
    }
}

#[test]
fn cutoff_of_square() {
    let m = 1.0_f64;
    let f = cutoff(0.0, 0.0, |_| 2.0, m, 40).unwrap();
    let b = f.basis().clone();
    let h = b.spacing();
    for i in 0..=40 {
        let s = b.knot(i);
        if s.abs() <= m + 1e-12 {
            assert!((f.eval(s) - s * s).abs() < 1e-9, "s = {s}");
        }
    }
    // second differences of the knot values bounded by sup |f''| = 2
    for i in 1..40 {
        let d2 = (f.eval(b.knot(i + 1)) - 2.0 * f.eval(b.knot(i)) + f.eval(b.knot(i - 1))) / (h * h);
        assert!((-1e-8..=2.0 + 1e-8).contains(&d2));
    }
    // affine beyond M + 1
    let s1 = f.eval_deriv(2.5);
    assert!((f.eval_deriv(9.0) - s1).abs() < 1e-12);
    assert!((f.eval_deriv(-9.0) + s1).abs() < 1e-12);
    assert!(s1 > 2.0 * m && s1 < 2.0 * (m + 1.0));
}

#[test]
fn cutoff_rejects_bad_arguments() {
    assert!(cutoff(0.0_f64, 0.0, |_| 2.0, 0.0, 20).is_err());
    assert!(cutoff(0.0_f64, 0.0, |_| 2.0, 1.0, 21).is_err());
}

#[test]
fn closure_reaction() {
    let r = FnReaction::new(|u: f64| u.exp(), |u: f64| u.exp());
    assert_eq!(r.eval_field(&[0.0, 0.0]).0, vec![1.0, 1.0]);
    assert_eq!(r.deriv_field(&[0.0]).0, vec![1.0]);
}

proptest! {
    #[test]
    fn pack_unpack_roundtrip(
        a in prop::collection::vec(-3.0..3.0_f64, 10),
        b in prop::collection::vec(-3.0..3.0_f64, 15),
    ) {
        let q = Potential::constant(HatBasis::spatial(1.0, 10, Some(0.5)).unwrap(), 0.7);
        let f = Nonlinearity::affine(HatBasis::state(-1.0, 1.0, 15, 0.0, Some(0.0)).unwrap(), 1.0, 0.0);
        let mut v = a.clone();
        v.extend(&b);
        let (q2, f2) = unpack(&v, &q, &f).unwrap();
        prop_assert_eq!(pack(&q2, &f2), v);
        prop_assert_eq!(q2.coeffs(), &a[..]);
        prop_assert_eq!(f2.coeffs(), &b[..]);
    }

    #[test]
    fn anchors_hold_for_any_coefficients(
        a in prop::collection::vec(-5.0..5.0_f64, 10),
        b in prop::collection::vec(-5.0..5.0_f64, 12),
        base in -2.0..2.0_f64,
        s0 in -0.5..0.5_f64,
    ) {
        let q = Potential::new(HatBasis::spatial(1.0, 10, Some(0.5)).unwrap(), a, base).unwrap();
        prop_assert_eq!(q.eval(0.5), base);
        let basis = HatBasis::state(-1.0, 1.0, 12, 0.05, Some(s0)).unwrap();
        let f = Nonlinearity::new(basis, b, 0.8, 0.0).unwrap();
        prop_assert!((f.eval(s0) - 0.8).abs() < 1e-12);
        prop_assert_eq!(f.anchor().map(|p| p.1), Some(0.8));
    }

    #[test]
    fn hat_partition_of_unity(p in -0.2..1.2_f64) {
        let basis = HatBasis::spatial(1.0_f64, 7, None).unwrap();
        let ones = vec![1.0; basis.len()];
        prop_assert!((basis.value(&ones, p) - 1.0).abs() < 1e-12);
    }
}
