use std::f64::consts::PI;

use approx::assert_relative_eq;
use kimura_core::bessel_poincare::{phi, poincare_1d, poincare_product, zeta1, ZETA1_TOL};
use kimura_core::corner_geometry::Point;
use kimura_core::kimura_discretization::{assemble, eigenvalues, GridSpec, KimuraOperator1D};
use proptest::prelude::*;

/// J₁ from its power series, adequate for z < 10.
fn bessel_j1(z: f64) -> f64 {
    let h = 0.5 * z;
    let mut term = h;
    let mut sum = term;
    for m in 1..60 {
        term *= -h * h / (m as f64 * (m as f64 + 1.0));
        sum += term;
    }
    sum
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn first_root_for_half_weight() {
    assert_relative_eq!(zeta1(0.5, ZETA1_TOL).unwrap(), PI * PI / 4.0, max_relative = 1e-10);
}

#[test]
fn first_root_against_j1_series() {
    let j11 = bisect(bessel_j1, 3.0, 4.5);
    assert!((j11 - 3.831_705_970_207_512).abs() < 1e-12);
    assert_relative_eq!(zeta1(1.0, ZETA1_TOL).unwrap(), j11 * j11 / 4.0, max_relative = 1e-8);
}

#[test]
fn first_root_against_tangent_equation() {
    let z = bisect(|z| z.tan() - z, 4.0, 4.6);
    assert_relative_eq!(zeta1(1.5, ZETA1_TOL).unwrap(), z * z / 4.0, max_relative = 1e-8);
}

#[test]
fn roots_exceed_the_elementary_bound() {
    for k in 0..40 {
        let b = 0.25 * (k + 1) as f64;
        assert!(zeta1(b, ZETA1_TOL).unwrap() > b + 1.0, "b = {b}");
    }
}

#[test]
fn case_one_matches_the_discrete_eigenvalue() {
    for &b in &[0.5, 1.0, 2.0] {
        for &x in &[0.0, 0.5, 0.9] {
            let op = KimuraOperator1D::w_ball(b, x, 1.0).unwrap();
            let d = assemble(&op, &GridSpec::graded(400)).unwrap();
            let lambda = eigenvalues(&d, 2).unwrap()[1];
            let bound = poincare_1d(b, b, b, x).unwrap();
            assert!(bound.exact);
            assert_relative_eq!(lambda, bound.lambda_lower, max_relative = 5e-3);
        }
    }
}

#[test]
fn product_rule_takes_the_smallest_factor() {
    let c = Point::new(vec![0.0], vec![0.0]);
    let v = poincare_product(&[1.0], 1.0, &c).unwrap();
    let w_factor = poincare_1d(1.0, 1.0, 1.0, 0.0).unwrap().lambda_lower;
    assert_eq!(v, w_factor.min(PI * PI / 4.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // ζφ''_b + bφ'_b + φ_b = 0, checked by central differences
    #[test]
    fn phi_solves_its_ode(b in 0.3f64..6.0, zeta in 0.5f64..40.0) {
        let h = 1e-3 * zeta.max(1.0);
        let f = |z: f64| phi(b, z).unwrap();
        let (m, c, p) = (f(zeta - h), f(zeta), f(zeta + h));
        let d1 = (p - m) / (2.0 * h);
        let d2 = (p - 2.0 * c + m) / (h * h);
        let scale = c.abs() + zeta * d2.abs() + b * d1.abs() + 1e-3;
        prop_assert!((zeta * d2 + b * d1 + c).abs() / scale < 1e-4);
    }

    // φ′_b = −φ_{b+1} in the Γ-normalized series
    #[test]
    fn phi_derivative_shifts_weight(b in 0.3f64..6.0, zeta in 0.1f64..60.0) {
        let h = 1e-4 * zeta.max(1.0);
        let d = (phi(b, zeta + h).unwrap() - phi(b, zeta - h).unwrap()) / (2.0 * h);
        let rhs = -phi(b + 1.0, zeta).unwrap();
        prop_assert!((d - rhs).abs() < 1e-6 * (1.0 + rhs.abs()));
    }

    #[test]
    fn root_is_above_b_plus_one(b in 0.05f64..20.0) {
        let z = zeta1(b, ZETA1_TOL).unwrap();
        prop_assert!(z > b + 1.0);
        prop_assert!(phi(b + 1.0, z).unwrap().abs() < 1e-8);
    }
}
