#![allow(dead_code)]

use std::path::{Path, PathBuf};

use coopgame::alpha::AlphaMatrix;
use coopgame::config::{load_config, RunConfig};
use coopgame::distribution::TabularDistribution;
use coopgame::space::FiniteSpace;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn shipped_config(name: &str) -> RunConfig {
    load_config(&configs_dir().join(name)).expect("shipped config loads")
}

/// A strictly positive random distribution.
pub fn random_dist(space: &FiniteSpace, rng: &mut ChaCha8Rng) -> TabularDistribution {
    let w: Vec<f64> = (0..space.total_size())
        .map(|_| rng.gen::<f64>() + 1e-3)
        .collect();
    TabularDistribution::from_weights(space.clone(), w).unwrap()
}

/// Random row-stochastic matrix whose diagonal is at least `min_diag`.
pub fn random_alpha(n: usize, min_diag: f64, rng: &mut ChaCha8Rng) -> AlphaMatrix {
    let rows = (0..n)
        .map(|i| {
            if n == 1 {
                return vec![1.0];
            }
            let d = min_diag + (1.0 - min_diag) * rng.gen::<f64>();
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let off: f64 = w
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .sum();
            let mut row: Vec<f64> = (0..n)
                .map(|j| if j == i { d } else { (1.0 - d) * w[j] / off })
                .collect();
            // Absorb rounding so the row sums to one as exactly as possible.
            let s: f64 = row.iter().sum();
            row[i] += 1.0 - s;
            row
        })
        .collect();
    AlphaMatrix::new(rows).unwrap()
}

/// A random game instance: `n <= max_players` targets on a space of at most
/// `max_size` outcomes split into up to three variables.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_players: usize,
    max_size: usize,
) -> (Vec<TabularDistribution>, AlphaMatrix) {
    let n = rng.gen_range(1..=max_players);
    let space = random_space(rng, max_size);
    let pi = (0..n).map(|_| random_dist(&space, rng)).collect();
    (pi, random_alpha(n, 0.05, rng))
}

pub fn random_space(rng: &mut ChaCha8Rng, max_size: usize) -> FiniteSpace {
    let mut cards = Vec::new();
    let mut size = 1;
    for _ in 0..rng.gen_range(1..=3) {
        let room = max_size / size;
        if room < 2 {
            break;
        }
        let c = rng.gen_range(2..=room.min(16));
        cards.push(c);
        size *= c;
    }
    FiniteSpace::from_pairs(
        cards
            .into_iter()
            .enumerate()
            .map(|(i, c)| (format!("v{i}"), c)),
    )
    .unwrap()
}

pub fn max_l1(a: &[TabularDistribution], b: &[TabularDistribution]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| coopgame::distribution::l1_distance(x.probs(), y.probs()))
        .fold(0.0, f64::max)
}
