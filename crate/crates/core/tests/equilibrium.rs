#![allow(clippy::needless_range_loop)]

mod common;

use coopgame::alpha::AlphaMatrix;
use coopgame::distribution::TabularDistribution;
use coopgame::equilibrium::{best_response_residual, iterate, solve_exact, spectral_radius_bound};
use coopgame::error::Error;
use coopgame::space::FiniteSpace;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{max_l1, random_instance};

fn instance(seed: u64) -> (Vec<TabularDistribution>, AlphaMatrix) {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 6, 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_solution_is_a_fixed_point(seed in any::<u64>()) {
        let (pi, alpha) = instance(seed);
        let eq = solve_exact(&pi, &alpha).unwrap();
        prop_assert!(best_response_residual(&eq.distributions, &pi, &alpha) < 1e-10);
        for d in &eq.distributions {
            prop_assert!(d.is_normalized());
        }
    }

    #[test]
    fn mixture_weights_are_convex(seed in any::<u64>()) {
        let (pi, alpha) = instance(seed);
        let m = solve_exact(&pi, &alpha).unwrap().mixture_matrix;
        let n = pi.len();
        for i in 0..n {
            let col: f64 = (0..n).map(|k| m[k][i]).sum();
            prop_assert!((col - 1.0).abs() < 1e-12);
            // Own data always carries at least the self-weight.
            prop_assert!(m[i][i] >= alpha.get(i, i) - 1e-12);
            for k in 0..n {
                prop_assert!(m[k][i] >= -1e-15);
            }
        }
    }

    #[test]
    fn iteration_reaches_the_closed_form(seed in any::<u64>()) {
        let (pi, alpha) = instance(seed);
        let exact = solve_exact(&pi, &alpha).unwrap();
        let it = iterate(&pi, &alpha, None, 200_000, 1e-13).unwrap();
        prop_assert!(it.converged);
        prop_assert!(max_l1(&it.distributions, &exact.distributions) < 1e-9);
    }

    #[test]
    fn bound_lies_in_unit_interval(seed in any::<u64>()) {
        let (_, alpha) = instance(seed);
        let b = spectral_radius_bound(&alpha);
        prop_assert!((0.0..1.0).contains(&b));
    }
}

#[test]
fn identity_keeps_every_target() {
    let (pi, _) = instance(5);
    let eq = solve_exact(&pi, &AlphaMatrix::identity(pi.len())).unwrap();
    assert!(max_l1(&eq.distributions, &pi) < 1e-14);
}

#[test]
fn uniform_rows_favour_own_data() {
    // p_i = (pi_i + p_j + p_k) / 3 summed over players gives sum p = sum pi,
    // so p_i = (pi_i + sum pi) / 4: own weight 1/2, each peer 1/4.
    let s = FiniteSpace::single(3).unwrap();
    let pi: Vec<_> = (0..3)
        .map(|i| TabularDistribution::point_mass(s.clone(), i).unwrap())
        .collect();
    let eq = solve_exact(&pi, &AlphaMatrix::symmetric(3, 1.0 / 3.0).unwrap()).unwrap();
    for (i, d) in eq.distributions.iter().enumerate() {
        for (x, &p) in d.probs().iter().enumerate() {
            let want = if x == i { 0.5 } else { 0.25 };
            assert!((p - want).abs() < 1e-12);
        }
    }
}

#[test]
fn asymmetric_two_player_closed_form() {
    // p1 = a pi1 + (1-a) p2, p2 = b pi2 + (1-b) p1 gives
    // p1 = (a pi1 + (1-a) b pi2) / (a + b - ab).
    let (a, b) = (0.3, 0.8);
    let s = FiniteSpace::single(2).unwrap();
    let pi = vec![
        TabularDistribution::point_mass(s.clone(), 0).unwrap(),
        TabularDistribution::point_mass(s.clone(), 1).unwrap(),
    ];
    let alpha = AlphaMatrix::new(vec![vec![a, 1.0 - a], vec![1.0 - b, b]]).unwrap();
    let eq = solve_exact(&pi, &alpha).unwrap();
    let den = a + b - a * b;
    assert!((eq.distributions[0].prob(0) - a / den).abs() < 1e-12);
    assert!((eq.distributions[1].prob(1) - b / den).abs() < 1e-12);
}

#[test]
fn zero_diagonal_without_a_path_is_singular() {
    let s = FiniteSpace::single(2).unwrap();
    let pi = vec![
        TabularDistribution::uniform(s.clone()),
        TabularDistribution::uniform(s),
    ];
    let alpha = AlphaMatrix::with_options(vec![vec![0.0, 1.0], vec![1.0, 0.0]], true).unwrap();
    assert!(matches!(
        solve_exact(&pi, &alpha),
        Err(Error::Singular { .. })
    ));
}

#[test]
fn data_free_player_copies_its_peers() {
    // A player with zero self-weight mixes the others' equilibria.
    let s = FiniteSpace::single(2).unwrap();
    let pi = vec![
        TabularDistribution::point_mass(s.clone(), 0).unwrap(),
        TabularDistribution::point_mass(s.clone(), 1).unwrap(),
        TabularDistribution::uniform(s),
    ];
    let alpha = AlphaMatrix::with_options(
        vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.25, 0.75, 0.0],
        ],
        true,
    )
    .unwrap();
    let eq = solve_exact(&pi, &alpha).unwrap();
    assert!((eq.distributions[2].prob(0) - 0.25).abs() < 1e-12);
    assert!(eq.mixture_matrix[2][2].abs() < 1e-15);
}
