use kimura_core::heat_semigroup::{chart_sample_nodes, fit_upper_envelope, log_times, HeatKernelGrid};
use kimura_core::kimura_discretization::{assemble, eigs, GridSpec, KimuraOperator1D};
use kimura_core::wright_fisher_mc::{
    empirical_stationary, in_simplex, marginal, simulate, transition_check, Bins, Drift, Recording, SimplexSDE,
    TransitionReference,
};
use proptest::prelude::*;

#[test]
fn uniform_weights_give_uniform_law() {
    let sde = SimplexSDE::interval(1.0, 1.0, 0.5, 2e-3, 500, 20_000, 11);
    let out = simulate(&sde).unwrap();
    let e = empirical_stationary(&marginal(&out.terminal, 0), &Bins::uniform(20)).unwrap();
    let l1 = e.l1_distance(&|a, b| b - a);
    assert!(l1 < 3.0 * e.mc_error(), "{l1} vs {}", e.mc_error());
}

#[test]
fn symmetric_setup_gives_symmetric_histogram() {
    let sde = SimplexSDE::interval(2.0, 2.0, 0.5, 2e-3, 300, 20_000, 3);
    let out = simulate(&sde).unwrap();
    let e = empirical_stationary(&marginal(&out.terminal, 0), &Bins::uniform(10)).unwrap();
    let mirrored: f64 = (0..10).map(|i| (e.masses[i] - e.masses[9 - i]).abs()).sum::<f64>() / 2.0;
    assert!(mirrored < 3.0 * e.mc_error());
}

#[test]
fn two_seeds_agree_statistically() {
    let run = |seed| {
        let sde = SimplexSDE::interval(3.0, 3.0, 0.5, 1e-3, 500, 10_000, seed);
        empirical_stationary(&marginal(&simulate(&sde).unwrap().terminal, 0), &Bins::uniform(20)).unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert!(a.l1_between(&b).unwrap() < 2.0 * (a.mc_error() + b.mc_error()));
}

#[test]
fn dirichlet_marginals_on_the_two_simplex() {
    let sde = SimplexSDE {
        n: 2,
        drift: Drift::MutationWeights(vec![1.0, 1.0, 1.0]),
        dt: 2e-3,
        steps: 750,
        paths: 5_000,
        seed: 5,
        start: vec![1.0 / 3.0, 1.0 / 3.0],
        record: None,
        thin: None,
    };
    let out = simulate(&sde).unwrap();
    for i in 0..2 {
        let e = empirical_stationary(&marginal(&out.terminal, i), &Bins::uniform(10)).unwrap();
        // Beta(1, 2) marginal
        let l1 = e.l1_distance(&|a, b| (1.0 - a).powi(2) - (1.0 - b).powi(2));
        assert!(l1 < 3.0 * e.mc_error(), "coordinate {i}: {l1}");
    }
}

#[test]
fn recorded_samples_follow_burn_in() {
    let mut sde = SimplexSDE::interval(1.0, 1.0, 0.5, 1e-3, 100, 3, 9);
    sde.record = Some(Recording { burn_in_fraction: 0.5, every: 10 });
    let out = simulate(&sde).unwrap();
    assert_eq!(out.samples.len(), 3 * 6);
}

#[test]
fn transition_law_matches_the_discrete_kernel() {
    let op = KimuraOperator1D::interval(1.0, 1.0).unwrap();
    let disc = assemble(&op, &GridSpec::chart(300)).unwrap();
    let eig = eigs(&disc, disc.dim()).unwrap();
    let g = op.geometry();
    let grid = HeatKernelGrid::build(&disc, &eig, &log_times(1e-3, 1.0, 12), &chart_sample_nodes(&disc, g, 20)).unwrap();
    let envelope = fit_upper_envelope(&grid, g, 2.0).unwrap().params;
    let reference = TransitionReference {
        op: &op,
        disc: &disc,
        eig: &eig,
        envelope: Some(envelope),
    };
    let sde = SimplexSDE::interval(1.0, 1.0, 0.5, 1e-4, 500, 200_000, 17);
    let r = transition_check(&sde, 0.05, &reference, &Bins::uniform(40)).unwrap();
    assert!(r.l1 < 8e-2, "L1 {}", r.l1);
    assert!(r.checked_bins > 0);
    assert_eq!(r.envelope_pass, Some(true), "{:?}", r.violations);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn states_stay_in_the_simplex(w in prop::collection::vec(0.0f64..3.0, 3), seed in 0u64..1000,
                                  s0 in 0.0f64..1.0, s1 in 0.0f64..1.0) {
        let start = if s0 + s1 <= 1.0 { vec![s0, s1] } else { vec![1.0 - s0, 1.0 - s1] };
        let sde = SimplexSDE {
            n: 2,
            drift: Drift::MutationWeights(w),
            dt: 2e-3,
            steps: 200,
            paths: 20,
            seed,
            start,
            record: None,
            thin: Some(kimura_core::wright_fisher_mc::Thinning { paths: 20, every: 1 }),
        };
        let out = simulate(&sde).unwrap();
        for path in &out.trajectories {
            for (_, x) in path {
                prop_assert!(in_simplex(x, 0.0), "{x:?}");
            }
        }
    }
}
