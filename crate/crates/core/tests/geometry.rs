use std::sync::Arc;

use approx::assert_relative_eq;
use kimura_core::corner_geometry::{
    ball_mass_1d_const, euclid_distance, intrinsic_distance, sup_distance, Ball, DoublingSweep, MetricKind, Point,
    WeightFn, WeightSpec, WeightedMeasure,
};
use kimura_core::quadrature::QuadSpec;
use proptest::prelude::*;

fn quad() -> QuadSpec {
    QuadSpec::default().with_rel_tol(1e-11)
}

#[test]
fn constant_weight_doubling_at_the_corner() {
    for (b, m) in [(vec![0.5], 1usize), (vec![1.0, 2.0], 0), (vec![0.75], 2)] {
        let expected = 2.0 * b.iter().sum::<f64>() + m as f64;
        let mu = WeightedMeasure::new(WeightSpec::constant(b.clone()).unwrap(), m);
        let n = b.len();
        let ratio = mu
            .doubling_ratio(&Point::origin(n, m), 0.3, MetricKind::SupW, quad())
            .unwrap();
        assert_relative_eq!(ratio.log2(), expected, max_relative = 1e-9);
    }
}

#[test]
fn variable_weights_have_finite_dimension() {
    let f: WeightFn = Arc::new(|_, p: &Point| 1.0 + 0.5 * (p.w[0] * p.w[0]).min(1.0));
    let spec = WeightSpec::variable(1, f, 1.0, 1.5, 0.0, 1.0).unwrap();
    let mu = WeightedMeasure::new(spec, 1);
    let sweep = DoublingSweep::log_grid(1, 1, 2.0, 3, 0.05, 1.0, 3);
    let est = mu.estimate_doubling_dimension(&sweep, quad()).unwrap();
    assert!(est.dimension.is_finite());
    // 2^{2nB+m+2} with n = 1, B = 1.5, m = 1
    assert!(est.dimension < 2.0 * 1.5 + 1.0 + 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_matches_closed_form(b in 0.3f64..3.0, w in 0.0f64..3.0, r in 0.05f64..2.0) {
        let mu = WeightedMeasure::new(WeightSpec::constant(vec![b]).unwrap(), 0);
        let ball = Ball::new(Point::new(vec![w], vec![]), r, MetricKind::SupW);
        let q = mu.ball_mass(&ball, quad()).unwrap();
        let exact = ball_mass_1d_const(b, w, r).unwrap();
        prop_assert!((q - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn mass_grows_with_radius(b in 0.3f64..3.0, w in 0.0f64..2.0, y in -1.0f64..1.0, r in 0.05f64..1.0) {
        let mu = WeightedMeasure::new(WeightSpec::constant(vec![b]).unwrap(), 1);
        let c = Point::new(vec![w], vec![y]);
        let small = mu.ball_mass(&Ball::new(c.clone(), r, MetricKind::SupW), quad()).unwrap();
        let large = mu.ball_mass(&Ball::new(c, 1.3 * r, MetricKind::SupW), quad()).unwrap();
        prop_assert!(large > small);
    }

    // ρ ≤ ‖·‖₂ ≤ √d ρ in w-coordinates, and the symbol distance
    // sqrt(4Σ|Δw|² + |Δy|²) lies between the surrogate and twice it.
    #[test]
    fn metric_sandwich(x1 in prop::collection::vec(0.0f64..4.0, 2), x2 in prop::collection::vec(0.0f64..4.0, 2),
                       y1 in -2.0f64..2.0, y2 in -2.0f64..2.0) {
        let p = Point::from_x(&x1, &[y1]).unwrap();
        let q = Point::from_x(&x2, &[y2]).unwrap();
        let s = sup_distance(&p, &q);
        let e = euclid_distance(&p, &q);
        prop_assert!(s <= e + 1e-15 && e <= 3f64.sqrt() * s + 1e-15);
        let surrogate = intrinsic_distance(&x1, &[y1], &x2, &[y2]).unwrap();
        let dw2: f64 = p.w.iter().zip(&q.w).map(|(a, b)| (a - b) * (a - b)).sum();
        let symbol = (4.0 * dw2 + (y1 - y2) * (y1 - y2)).sqrt();
        prop_assert!(surrogate <= symbol + 1e-12 && symbol <= 2.0 * surrogate + 1e-12);
    }
}
