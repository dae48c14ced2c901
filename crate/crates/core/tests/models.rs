mod common;

use coopgame::distribution::TabularDistribution;
use coopgame::model::{
    grad_log_likelihood, max_entropy_check, ExpFamilyModel, FeatureMap, FeatureSpec,
    GenerativeModel, InitSpec, Model, ModelSpec, NamedFeatures, TabularModel,
};
use coopgame::space::FiniteSpace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::random_dist;

fn chi_square_p_value(probs: &[f64], draws: &[u32]) -> f64 {
    let n = draws.len() as f64;
    let mut counts = vec![0.0; probs.len()];
    for &d in draws {
        counts[d as usize] += 1.0;
    }
    let mut stat = 0.0;
    let mut cells = 0;
    for (c, p) in counts.iter().zip(probs) {
        if *p > 0.0 {
            stat += (c - n * p).powi(2) / (n * p);
            cells += 1;
        } else {
            assert_eq!(*c, 0.0, "drew an outcome of zero probability");
        }
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

#[test]
fn tabular_sampling_passes_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..5 {
        let s = FiniteSpace::single(rng.gen_range(2..40)).unwrap();
        let m = TabularModel::from_distribution(random_dist(&s, &mut rng));
        let draws = m.sample_outcomes(100_000, &mut ChaCha8Rng::seed_from_u64(k));
        let p = chi_square_p_value(m.probs(), &draws);
        assert!(p > 1e-3, "instance {k}: p = {p}");
    }
}

#[test]
fn loglinear_sampling_passes_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let s = FiniteSpace::from_pairs([("a", 4), ("b", 3)]).unwrap();
    let map = FeatureMap::build(&s, &FeatureSpec::Named(NamedFeatures::Pairwise)).unwrap();
    let theta: Vec<f64> = (0..map.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = ExpFamilyModel::new(s, map, theta).unwrap();
    let draws = m.sample_outcomes(100_000, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(chi_square_p_value(m.probs(), &draws) > 1e-3);
}

#[test]
fn point_mass_samples_are_constant() {
    let s = FiniteSpace::single(5).unwrap();
    let m = TabularModel::from_distribution(TabularDistribution::point_mass(s, 3).unwrap());
    assert!(m
        .sample_outcomes(1000, &mut ChaCha8Rng::seed_from_u64(0))
        .iter()
        .all(|&x| x == 3));
}

#[test]
fn moment_matching_on_eight_points() {
    let s = FiniteSpace::from_pairs([("a", 2), ("b", 2), ("c", 2)]).unwrap();
    let map =
        FeatureMap::build(&s, &FeatureSpec::Named(NamedFeatures::SingletonMarginals)).unwrap();
    let target =
        TabularDistribution::from_weights(s.clone(), vec![5.0, 1.0, 2.0, 7.0, 1.0, 3.0, 4.0, 2.0])
            .unwrap();
    let mut m = ExpFamilyModel::zero(s, map.clone()).unwrap();
    let want = map.expectation(target.probs());
    let mut steps = 0;
    loop {
        let gap = grad_log_likelihood(&m, &target).unwrap();
        if gap.iter().all(|g| g.abs() < 1e-6) {
            break;
        }
        assert!(steps < 10_000, "no convergence; gap {gap:?}");
        m.fit_step(&target, 0.5).unwrap();
        steps += 1;
    }
    let got = map.expectation(m.probs());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-6);
    }
    // The fitted model is the maximum-entropy distribution with those moments.
    assert!(max_entropy_check(&m).passed);
}

#[test]
fn saturated_loglinear_reaches_any_table() {
    let s = FiniteSpace::single(6).unwrap();
    let target =
        TabularDistribution::from_weights(s.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let spec = ModelSpec::LogLinear {
        features: FeatureSpec::Named(NamedFeatures::Saturated),
    };
    let mut m = Model::build(&s, &spec, &InitSpec::Uniform).unwrap();
    for _ in 0..5000 {
        m.fit_step(&target, 1.0).unwrap();
    }
    for (a, b) in m.probs().iter().zip(target.probs()) {
        assert!((a - b).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tabular_step_is_a_convex_move(seed in any::<u64>(), step in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = FiniteSpace::single(rng.gen_range(2..20)).unwrap();
        let start = random_dist(&s, &mut rng);
        let target = random_dist(&s, &mut rng);
        let mut m = TabularModel::from_distribution(start.clone());
        m.fit_step(&target, step).unwrap();
        for ((p, a), t) in m.probs().iter().zip(start.probs()).zip(target.probs()) {
            prop_assert!((p - (a + step * (t - a))).abs() < 1e-12);
        }
    }

    #[test]
    fn small_gradient_step_raises_likelihood(seed in any::<u64>()) {
        // Small steps on a concave objective increase it.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..16);
        let s = FiniteSpace::single(n).unwrap();
        let d = rng.gen_range(1..5);
        let table: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let map = FeatureMap::from_table(&s, &table).unwrap();
        let target = random_dist(&s, &mut rng);
        let mut m = ExpFamilyModel::zero(s, map).unwrap();
        let before = coopgame::model::log_likelihood(&m, &target);
        m.fit_step(&target, 0.05).unwrap();
        let after = coopgame::model::log_likelihood(&m, &target);
        prop_assert!(after >= before - 1e-12);
    }
}
