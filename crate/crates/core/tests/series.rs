use num_rational::BigRational;
use num_traits::Zero;
use kimura_core::stationary_series::{
    apply_adjoint, compare_first_order, series_diff_x, series_diff_y, series_mul, solve_expansion, solve_from, LogSeries,
    RatFn,
};
use proptest::prelude::*;

fn q(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

#[test]
fn constant_weight_needs_no_correction() {
    let s = solve_expansion(3).unwrap();
    for (&(j, _), c) in s.terms() {
        if j == 0 {
            continue;
        }
        let v = c.eval_exact(&[q(3), q(0), q(0), q(0), q(0), q(0), q(0)]).unwrap();
        assert!(v.is_zero());
    }
    let r = apply_adjoint(&LogSeries::one(3), 3).unwrap();
    for (_, c) in r.terms() {
        assert!(c.eval_exact(&[q(2), q(0), q(0), q(0), q(0)]).unwrap().is_zero());
    }
}

#[test]
fn solved_series_leaves_no_residual() {
    for order in 1..=3 {
        let s = solve_expansion(order).unwrap();
        s.check_shape().unwrap();
        assert_eq!(apply_adjoint(&s, order).unwrap().lowest_order(), None);
        assert_eq!(solve_from(&s, order).unwrap(), s);
    }
    // the first-order block alone leaves residual only from order two on
    let s = solve_expansion(1).unwrap();
    let mut padded = LogSeries::zero(2);
    for (&(j, k), c) in s.terms() {
        padded.set(j, k, c.clone());
    }
    assert_eq!(apply_adjoint(&padded, 2).unwrap().lowest_order(), Some(2));
}

/// Lᵗν = ∂²ₓ(xν) + ∂²_yν − ∂ₓ(bν) by central differences for b(y) = 2 + y.
fn adjoint_fd(nu: &dyn Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    let hx = 1e-3 * x;
    let hy = 1e-3;
    let g = |x: f64| x * nu(x, y);
    let dxx = (g(x + hx) - 2.0 * g(x) + g(x - hx)) / (hx * hx);
    let dyy = (nu(x, y + hy) - 2.0 * nu(x, y) + nu(x, y - hy)) / (hy * hy);
    let bnu = |x: f64| (2.0 + y) * nu(x, y);
    let dx = (bnu(x + hx) - bnu(x - hx)) / (2.0 * hx);
    dxx + dyy - dx
}

#[test]
fn first_order_block_checked_pointwise() {
    let sol = solve_expansion(1).unwrap();
    // coefficients of the solved block as functions of y for b = 2 + y
    let phi = |k: u32, y: f64| sol.coefficient(1, k).eval(&[2.0 + y, 1.0, 0.0, 0.0, 0.0]);
    let nu = |x: f64, y: f64| {
        let l = x.ln();
        let f = 1.0 + x * (phi(2, y) * l * l + phi(1, y) * l + phi(0, y));
        f * x.powf(1.0 + y)
    };
    let bare = |x: f64, y: f64| x.powf(1.0 + y);
    for &x in &[1e-3, 1e-4] {
        let corrected = adjoint_fd(&nu, x, 0.0).abs();
        let uncorrected = adjoint_fd(&bare, x, 0.0).abs();
        assert!(corrected < 0.2 * uncorrected, "x = {x}: {corrected} vs {uncorrected}");
    }
    let checks = compare_first_order(&sol, &[2.0, 1.0, 0.0]);
    let top = checks.iter().find(|c| c.k == 2).unwrap();
    assert!(top.identical);
    assert_eq!(top.solved_value, -0.5);
}

#[test]
fn sampled_first_order_values() {
    let sol = solve_expansion(2).unwrap();
    let at = |k| sol.coefficient(1, k).eval_exact(&[q(2), q(1), q(0)]).unwrap();
    assert_eq!(at(2), BigRational::new((-1).into(), 2.into()));
    assert_eq!(at(1), BigRational::new(3.into(), 2.into()));
    assert_eq!(at(0), BigRational::new((-7).into(), 4.into()));
}

fn coefficient() -> impl Strategy<Value = RatFn> {
    (-3i64..=3, 0usize..3, 0u32..3, 0i64..2, 0u32..2).prop_map(|(c, sym, pow, shift, dpow)| {
        let mut v = RatFn::integer(c);
        for _ in 0..pow {
            v = v * RatFn::symbol(sym);
        }
        v.over_shifted(shift, dpow)
    })
}

fn series() -> impl Strategy<Value = LogSeries> {
    (prop::collection::vec((0u32..3, 0u32..5, coefficient()), 1..5), 0i32..2).prop_map(|(terms, weight)| {
        let mut s = LogSeries::zero(3);
        for (j, k, c) in terms {
            s.set(j, k.min(2 * j), c);
        }
        series_mul(&s, &LogSeries::weight(weight, 3), 3).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mixed_derivatives_commute(s in series()) {
        let xy = series_diff_y(&series_diff_x(&s).unwrap()).unwrap();
        let yx = series_diff_x(&series_diff_y(&s).unwrap()).unwrap();
        prop_assert!(xy == yx);
        prop_assert!(xy.check_shape().is_ok());
    }

    #[test]
    fn products_keep_the_triangular_shape(a in series(), b in series()) {
        let p = series_mul(&a, &b, 3).unwrap();
        prop_assert!(p.check_shape().is_ok());
        prop_assert!(p == series_mul(&b, &a, 3).unwrap());
    }
}
