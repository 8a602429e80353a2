use approx::assert_relative_eq;
use kimura_core::harnack_probe::{
    harnack_scale_stability, ratio_from_samples, singular_inequality_constant, solve_for_window, window_samples,
    DataFamily, HarnackWindow,
};
use kimura_core::heat_semigroup::{
    conservation_defect, flat_neumann_kernel, heat_kernel, semigroup_defect, solve_parabolic, ParabolicOptions,
};
use kimura_core::kimura_discretization::{assemble, eigs, DiscreteOperator, GridSpec, KimuraOperator1D};
use kimura_core::quadrature::GaussRule;
use proptest::prelude::*;

fn disc(b: f64, n: usize) -> (KimuraOperator1D, DiscreteOperator) {
    let op = KimuraOperator1D::interval(b, b).unwrap();
    let d = assemble(&op, &GridSpec::chart(n)).unwrap();
    (op, d)
}

#[test]
fn kernel_conserves_mass_and_composes() {
    let (_, d) = disc(0.5, 120);
    let e = eigs(&d, d.dim()).unwrap();
    for &t in &[1e-3, 0.05, 0.5] {
        assert!(conservation_defect(&d, &e, t).unwrap() < 1e-8);
        assert!(semigroup_defect(&d, &e, t).unwrap() < 1e-8);
    }
}

#[test]
fn flat_kernel_matches_cosine_series() {
    // Neumann heat kernel on [0, 1]: 1 + 2Σ e^{−k²π²t} cos kπx cos kπy
    let (t, x, y) = (0.01, 0.3, 0.45);
    let series: f64 = 1.0
        + 2.0
            * (1..400)
                .map(|k| {
                    let kp = k as f64 * std::f64::consts::PI;
                    (-kp * kp * t).exp() * (kp * x).cos() * (kp * y).cos()
                })
                .sum::<f64>();
    assert_relative_eq!(flat_neumann_kernel(0.0, 1.0, t, x, y), series, max_relative = 1e-10);
}

#[test]
fn kernel_matrix_is_symmetric_and_positive_near_diagonal() {
    let (_, d) = disc(1.0, 100);
    let e = eigs(&d, d.dim()).unwrap();
    let k = heat_kernel(&e, 0.01).unwrap();
    for i in 0..d.dim() {
        assert!(k[(i, i)] > 0.0);
        for j in 0..d.dim() {
            assert!((k[(i, j)] - k[(j, i)]).abs() <= 1e-10 * k[(i, i)].max(k[(j, j)]));
        }
    }
}

#[test]
fn flat_interval_ratios_match_reflection_oracle() {
    let op = KimuraOperator1D::neumann(-1.0, 1.0).unwrap();
    let d = assemble(&op, &GridSpec::uniform(200)).unwrap();
    let g = op.geometry();
    let data = DataFamily::random(3, 6).generate(&d).unwrap();
    let rule = GaussRule::legendre(8);
    for &r in &[0.05, 0.1, 0.2] {
        let w = HarnackWindow::from_start(r, 0.0).unwrap();
        for u in &data {
            let traj = solve_for_window(&d, &w, u).unwrap();
            let smp = window_samples(&d, g, &w, &traj.times).unwrap();
            let scale = u.iter().copied().fold(0.0, f64::max);
            let fe = ratio_from_samples(&smp, &|k, _, j| traj.states[k][smp.nodes[j]], scale).unwrap();
            let oracle = |t: f64, x: f64| {
                let mut acc = 0.0;
                for e in 0..d.nodes.len() - 1 {
                    let (a, b) = (d.nodes[e], d.nodes[e + 1]);
                    let (xs, ws) = rule.mapped(a, b);
                    for (&y, &wt) in xs.iter().zip(&ws) {
                        let s = (y - a) / (b - a);
                        acc += wt * flat_neumann_kernel(-1.0, 1.0, t, x, y) * (u[e] * (1.0 - s) + u[e + 1] * s);
                    }
                }
                acc
            };
            let exact = ratio_from_samples(&smp, &|_, t, j| oracle(t, smp.points[j]), scale).unwrap();
            assert_relative_eq!(fe.ratio, exact.ratio, max_relative = 0.1);
        }
    }
}

#[test]
fn harnack_spread_on_both_degenerate_sides() {
    for &b in &[0.5, 3.0] {
        let (op, d) = disc(b, 200);
        let s = harnack_scale_stability(&d, op.geometry(), 0.0, &[0.05, 0.1, 0.2], &DataFamily::random(1, 8), 3.0)
            .unwrap();
        assert!(s.pass, "b = {b}: {:?}", s.per_radius);
        assert!(s.per_radius.iter().all(|(_, m)| *m >= 1.0));
    }
}

#[test]
fn unbounded_potential_needs_a_gradient_term() {
    let q = |x: f64| x.ln();
    let mut zero = Vec::new();
    let mut positive = Vec::new();
    for &n in &[50usize, 100, 200] {
        let op = KimuraOperator1D::interval(1.0, 1.0).unwrap();
        let d = assemble(&op, &GridSpec::uniform(n)).unwrap();
        zero.push(singular_inequality_constant(&d, &q, 0.0).unwrap());
        positive.push(singular_inequality_constant(&d, &q, 0.1).unwrap());
    }
    assert!(zero[1] - zero[0] > 0.5 && zero[2] - zero[1] > 0.5);
    assert!((positive[2] - positive[1]).abs() < 0.1 * positive[2]);
}

#[test]
fn solver_preserves_integral() {
    let (_, d) = disc(2.0, 80);
    let u0: Vec<f64> = d.nodes.iter().map(|x| (x < &0.3) as u8 as f64).collect();
    let traj = solve_parabolic(&d, &u0, 0.2, ParabolicOptions::new(100)).unwrap();
    let mass = |u: &[f64]| d.mass.matvec(u).iter().sum::<f64>();
    assert_relative_eq!(mass(traj.states.last().unwrap()), mass(&u0), max_relative = 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_is_nonincreasing_in_eta(b in 0.5f64..3.0, e1 in 0.01f64..2.0, e2 in 0.01f64..2.0) {
        let op = KimuraOperator1D::interval(b, b).unwrap();
        let d = assemble(&op, &GridSpec::uniform(60)).unwrap();
        let q = |x: f64| x.ln();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let c_lo = singular_inequality_constant(&d, &q, lo).unwrap();
        let c_hi = singular_inequality_constant(&d, &q, hi).unwrap();
        prop_assert!(c_hi <= c_lo + 1e-9 * c_lo.max(1.0));
    }
}
