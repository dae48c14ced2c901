mod common;

use coopgame::alpha::AlphaMatrix;
use coopgame::distribution::{l1_distance, TabularDistribution};
use coopgame::engine::{
    run_game, run_heterogeneous_game, AlphaSchedule, GameSpec, PlayerSelection, PlayerSpec,
    Segment, StepRule,
};
use coopgame::equilibrium::{iterate, solve_exact};
use coopgame::model::{FeatureSpec, InitSpec, Model, ModelSpec, NamedFeatures, TabularModel};
use coopgame::space::FiniteSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{max_l1, random_dist};

fn tabular(s: &FiniteSpace) -> Model {
    Model::Tabular(TabularModel::uniform(s.clone()))
}

fn game(
    pi: &[TabularDistribution],
    alpha: AlphaMatrix,
    model: impl Fn(&FiniteSpace) -> Model,
) -> GameSpec {
    let s = pi[0].space().clone();
    let players = pi
        .iter()
        .map(|d| PlayerSpec::new(model(&s), Some(d.clone())))
        .collect();
    GameSpec::new(s, players, AlphaSchedule::constant(alpha))
}

fn three_player() -> (Vec<TabularDistribution>, AlphaMatrix) {
    let s = FiniteSpace::single(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pi = (0..3).map(|_| random_dist(&s, &mut rng)).collect();
    let alpha = AlphaMatrix::new(vec![
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.5, 0.3],
        vec![0.25, 0.25, 0.5],
    ])
    .unwrap();
    (pi, alpha)
}

#[test]
fn simultaneous_exact_play_is_the_fixed_point_iteration() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha.clone(), tabular);
    spec.selection = PlayerSelection::Simultaneous;
    spec.exact_mixtures = true;
    spec.rounds = 25;
    for p in &mut spec.players {
        p.step = StepRule::constant(1.0);
        p.inner_steps = 1;
        p.model = Model::Tabular(TabularModel::from_distribution(p.data.clone().unwrap()));
    }
    let out = run_game(&spec).unwrap();
    let it = iterate(&pi, &alpha, None, 25, 0.0).unwrap();
    assert!(max_l1(&out.final_distributions, &it.distributions) < 1e-14);
}

#[test]
fn exact_play_converges_to_the_closed_form() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha.clone(), tabular);
    spec.exact_mixtures = true;
    spec.rounds = 600;
    let out = run_game(&spec).unwrap();
    let eq = solve_exact(&pi, &alpha).unwrap();
    assert!(max_l1(&out.final_distributions, &eq.distributions) < 1e-8);
}

#[test]
fn each_move_raises_the_movers_utility() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha, tabular);
    spec.exact_mixtures = true;
    spec.rounds = 60;
    for p in &mut spec.players {
        p.step = StepRule::constant(0.3);
    }
    let out = run_game(&spec).unwrap();
    let h = &out.history;
    for round in 1..=spec.rounds {
        let mover = h.selections[round as usize - 1][0];
        let at = |r: u64| {
            h.rows
                .iter()
                .find(|x| x.round == r && x.player == mover)
                .unwrap()
                .utility
        };
        assert!(at(round) >= at(round - 1) - 1e-12, "round {round}");
    }
}

#[test]
fn starting_at_equilibrium_stays_there() {
    let (pi, alpha) = three_player();
    let eq = solve_exact(&pi, &alpha).unwrap();
    for exact in [true, false] {
        let mut spec = game(&pi, alpha.clone(), tabular);
        spec.exact_mixtures = exact;
        spec.rounds = 90;
        spec.master_seed = 4;
        for (p, d) in spec.players.iter_mut().zip(&eq.distributions) {
            p.model = Model::build(
                &spec.space,
                &ModelSpec::Tabular,
                &InitSpec::Probs {
                    probs: d.probs().to_vec(),
                },
            )
            .unwrap();
            p.batch_size = 2048;
        }
        let out = run_game(&spec).unwrap();
        let drift = max_l1(&out.final_distributions, &eq.distributions);
        let limit = if exact { 1e-12 } else { 0.05 };
        assert!(drift < limit, "exact={exact}: drift {drift}");
    }
}

#[test]
fn self_reliant_player_ignores_its_peers() {
    // Player 0 never trains on peer samples, so peer data cannot touch it.
    let s = FiniteSpace::single(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let own = random_dist(&s, &mut rng);
    let alpha = AlphaMatrix::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    let run_with = |peer: TabularDistribution| {
        let mut spec = game(&[own.clone(), peer], alpha.clone(), tabular);
        spec.rounds = 40;
        spec.master_seed = 17;
        run_game(&spec).unwrap()
    };
    let a = run_with(random_dist(&s, &mut rng));
    let b = run_with(TabularDistribution::point_mass(s.clone(), 3).unwrap());
    let rows = |o: &coopgame::engine::GameOutcome| -> Vec<f64> {
        o.history.player_rows(0).map(|r| r.own_loglik).collect()
    };
    assert_eq!(rows(&a), rows(&b));
    assert_eq!(a.final_distributions[0], b.final_distributions[0]);
    assert_ne!(a.final_distributions[1], b.final_distributions[1]);
}

#[test]
fn model_families_are_interchangeable() {
    // A saturated log-linear player and a tabular player see the same data
    // stream and settle at the same equilibrium.
    let (pi, alpha) = three_player();
    let eq = solve_exact(&pi, &alpha).unwrap();
    let loglinear = |s: &FiniteSpace| {
        let spec = ModelSpec::LogLinear {
            features: FeatureSpec::Named(NamedFeatures::Saturated),
        };
        Model::build(s, &spec, &InitSpec::Uniform).unwrap()
    };
    let mut finals = Vec::new();
    for family in [&tabular as &dyn Fn(&FiniteSpace) -> Model, &loglinear] {
        let mut spec = game(&pi, alpha.clone(), family);
        spec.rounds = 900;
        spec.master_seed = 12;
        for p in &mut spec.players {
            p.batch_size = 1024;
            p.step = StepRule::constant(0.2);
        }
        let out = run_game(&spec).unwrap();
        let err = max_l1(&out.final_distributions, &eq.distributions);
        assert!(err < 0.06, "L1 to equilibrium {err}");
        finals.push(out.final_distributions);
    }
    assert!(max_l1(&finals[0], &finals[1]) < 0.08);
}

#[test]
fn full_subsets_reduce_to_the_homogeneous_engine() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha, tabular);
    spec.rounds = 30;
    spec.master_seed = 6;
    let plain = run_game(&spec).unwrap();
    let hetero = run_heterogeneous_game(&spec).unwrap();
    assert_eq!(plain.history.to_csv(), hetero.history.to_csv());
    assert_eq!(plain.final_distributions, hetero.final_distributions);
}

#[test]
fn dynamic_alpha_switches_reference() {
    let (pi, _) = three_player();
    let early = AlphaMatrix::identity(3);
    let late = AlphaMatrix::symmetric(3, 0.4).unwrap();
    let mut spec = game(&pi, early.clone(), tabular);
    spec.alpha = AlphaSchedule::new(vec![
        Segment {
            from_round: 0,
            alpha: early,
        },
        Segment {
            from_round: 301,
            alpha: late.clone(),
        },
    ])
    .unwrap();
    spec.exact_mixtures = true;
    spec.rounds = 900;
    let out = run_game(&spec).unwrap();
    assert_eq!(out.references.len(), 2);
    let mid: Vec<TabularDistribution> = (0..3)
        .map(|i| {
            let r = out
                .history
                .rows
                .iter()
                .find(|r| r.round == 300 && r.player == i)
                .unwrap();
            assert!(
                r.l1_to_eq < 1e-6,
                "player {i} off its own data at the switch"
            );
            out.references[0][i].clone()
        })
        .collect();
    assert!(max_l1(&mid, &pi) < 1e-15);
    let eq = solve_exact(&pi, &late).unwrap();
    assert!(max_l1(&out.final_distributions, &eq.distributions) < 1e-6);
}

#[test]
fn data_free_player_learns_from_peers() {
    let s = FiniteSpace::single(3).unwrap();
    let pi0 = TabularDistribution::from_weights(s.clone(), vec![6.0, 3.0, 1.0]).unwrap();
    let alpha = AlphaMatrix::with_options(vec![vec![1.0, 0.0], vec![1.0, 0.0]], true).unwrap();
    let mut spec = GameSpec::new(
        s.clone(),
        vec![
            PlayerSpec::new(tabular(&s), Some(pi0.clone())),
            PlayerSpec::new(tabular(&s), None),
        ],
        AlphaSchedule::constant(alpha),
    );
    spec.rounds = 400;
    spec.master_seed = 1;
    for p in &mut spec.players {
        p.batch_size = 2048;
    }
    let out = run_game(&spec).unwrap();
    assert!(l1_distance(out.final_distributions[1].probs(), pi0.probs()) < 0.05);
}

#[test]
fn selection_policies() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha, tabular);
    spec.rounds = 9;
    let rr = run_game(&spec).unwrap();
    let order: Vec<usize> = rr.history.selections.iter().map(|s| s[0]).collect();
    assert_eq!(order, vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);

    spec.selection = PlayerSelection::Simultaneous;
    let sim = run_game(&spec).unwrap();
    assert!(sim.history.selections.iter().all(|s| s == &vec![0, 1, 2]));

    spec.selection = PlayerSelection::UniformRandom;
    spec.rounds = 300;
    let ur = run_game(&spec).unwrap();
    let mut counts = [0; 3];
    for s in &ur.history.selections {
        assert_eq!(s.len(), 1);
        counts[s[0]] += 1;
    }
    assert!(counts.iter().all(|&c| c > 60), "{counts:?}");
    assert_eq!(
        ur.history.selections,
        run_game(&spec).unwrap().history.selections
    );
}

#[test]
fn history_has_one_row_per_player_and_round() {
    let (pi, alpha) = three_player();
    let mut spec = game(&pi, alpha, tabular);
    spec.rounds = 7;
    let out = run_game(&spec).unwrap();
    assert_eq!(out.history.rows.len(), 3 * 8);
    let csv = out.history.to_csv();
    assert!(csv.starts_with("round,player,kl_to_eq,l1_to_eq,own_loglik,utility\n"));
    assert_eq!(csv.lines().count(), 1 + 24);
    assert!(out.history.messages > 0);
}
