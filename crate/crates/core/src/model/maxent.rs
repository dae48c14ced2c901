//! Diagnostic for the max-entropy dual: an exponential-family member must
//! have the largest entropy among all distributions sharing its expected
//! features. The check searches the feasible polytope directly with a
//! Newton-projected entropy ascent; it never uses the exponential form.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::TabularDistribution;

use super::{ExpFamilyModel, GenerativeModel};

pub const ENTROPY_SLACK: f64 = 1e-6;
const MAX_SIZE: usize = 4096;
const MAX_NEWTON_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct MaxEntReport {
    pub passed: bool,
    pub model_entropy: f64,
    /// Largest entropy found among moment-matching distributions.
    pub best_entropy: f64,
    /// Largest violation of the moment constraints by the best point found.
    pub constraint_gap: f64,
    /// A moment-matching distribution with larger entropy, on failure.
    pub witness: Option<TabularDistribution>,
}

fn entropy(q: &[f64]) -> f64 {
    -q.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

struct Constraints {
    /// (d + 1) x n: feature rows plus the normalization row.
    c: DMatrix<f64>,
}

impl Constraints {
    fn new(model: &ExpFamilyModel) -> Self {
        let f = model.features();
        let n = f.n_outcomes();
        let d = f.dim();
        let c = DMatrix::from_fn(d + 1, n, |r, x| if r < d { f.row(x)[r] } else { 1.0 });
        Self { c }
    }

    /// Projects `g` onto the null space of `C` in the metric `diag(w)^{-1}`:
    /// returns `W (g - C^T lambda)` with `C W C^T lambda = C W g`.
    fn project(&self, g: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let cw = DMatrix::from_fn(self.c.nrows(), self.c.ncols(), |r, x| self.c[(r, x)] * w[x]);
        let k = &cw * self.c.transpose();
        let rhs = &cw * g;
        let svd = k.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max().max(1e-300);
        let lambda = svd
            .solve(&rhs, eps)
            .unwrap_or_else(|_| DVector::zeros(self.c.nrows()));
        let resid = g - self.c.transpose() * lambda;
        resid.component_mul(w)
    }

    fn gap(&self, q: &[f64], reference: &DVector<f64>) -> f64 {
        let v = &self.c * DVector::from_column_slice(q);
        (v - reference).amax()
    }
}

fn ascend(cons: &Constraints, start: Vec<f64>) -> Vec<f64> {
    let mut q = start;
    let mut h = entropy(&q);
    for _ in 0..MAX_NEWTON_STEPS {
        let g = DVector::from_iterator(q.len(), q.iter().map(|v| -(v.ln() + 1.0)));
        let w = DVector::from_column_slice(&q);
        let dir = cons.project(&g, &w);
        let decrement = g.dot(&dir);
        if decrement.is_nan() || decrement <= 1e-16 {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = q.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            if cand.iter().all(|&v| v > 0.0) {
                let hc = entropy(&cand);
                if hc >= h {
                    q = cand;
                    h = hc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    q
}

/// Verifies that `model.distribution()` maximizes entropy subject to its own
/// feature moments, within [`ENTROPY_SLACK`].
pub fn max_entropy_check(model: &ExpFamilyModel) -> MaxEntReport {
    let p = model.probs().to_vec();
    let h_model = entropy(&p);
    let n = p.len();
    if n > MAX_SIZE || p.iter().any(|&v| v <= 0.0) {
        // Outside the brute-force regime or on the boundary of the simplex.
        return MaxEntReport {
            passed: false,
            model_entropy: h_model,
            best_entropy: f64::NAN,
            constraint_gap: f64::NAN,
            witness: None,
        };
    }
    let cons = Constraints::new(model);
    let reference = &cons.c * DVector::from_column_slice(&p);

    let mut starts = vec![p.clone()];
    // A second start elsewhere in the feasible set: a random null-space move.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_7865_6e74);
    let noise = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let dir = cons.project(&noise, &DVector::from_element(n, 1.0));
    let limit = p
        .iter()
        .zip(dir.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(q, d)| 0.5 * q / -d)
        .fold(f64::INFINITY, f64::min);
    if dir.amax() > 1e-12 && limit.is_finite() {
        starts.push(
            p.iter()
                .zip(dir.iter())
                .map(|(q, d)| q + limit * d)
                .collect(),
        );
    }

    let mut best = p.clone();
    let mut best_h = h_model;
    for s in starts {
        let q = ascend(&cons, s);
        let hq = entropy(&q);
        if hq > best_h && cons.gap(&q, &reference) < 1e-8 {
            best_h = hq;
            best = q;
        }
    }
    let passed = best_h <= h_model + ENTROPY_SLACK;
    let witness = if passed {
        None
    } else {
        TabularDistribution::from_weights(model.space().clone(), best.clone()).ok()
    };
    MaxEntReport {
        passed,
        model_entropy: h_model,
        best_entropy: best_h,
        constraint_gap: cons.gap(&best, &reference),
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureMap;
    use crate::space::FiniteSpace;

    #[test]
    fn saturated_family_passes() {
        let s = FiniteSpace::single(6).unwrap();
        let m = ExpFamilyModel::new(
            s.clone(),
            FeatureMap::saturated(&s),
            vec![0.1, 0.5, -1.0, 2.0, 0.0, 0.3],
        )
        .unwrap();
        assert!(max_entropy_check(&m).passed);
    }

    #[test]
    fn zero_theta_is_uniform() {
        let s = FiniteSpace::from_pairs([("a", 3), ("b", 2)]).unwrap();
        let table: Vec<Vec<f64>> = (0..6).map(|x| vec![x as f64, (x % 2) as f64]).collect();
        let m =
            ExpFamilyModel::zero(s.clone(), FeatureMap::from_table(&s, &table).unwrap()).unwrap();
        let r = max_entropy_check(&m);
        assert!(r.passed);
        assert!((r.model_entropy - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn first_coordinate_feature_on_two_by_two() {
        // Only E[a] is constrained; max entropy keeps b uniform given a.
        let s = FiniteSpace::from_pairs([("a", 2), ("b", 2)]).unwrap();
        let table: Vec<Vec<f64>> = (0..4)
            .map(|x| vec![s.index_to_tuple(x).unwrap()[0] as f64])
            .collect();
        let m = ExpFamilyModel::new(
            s.clone(),
            FeatureMap::from_table(&s, &table).unwrap(),
            vec![0.8],
        )
        .unwrap();
        let r = max_entropy_check(&m);
        assert!(r.passed, "{r:?}");
        let m1 = 0.8f64.exp() / (1.0 + 0.8f64.exp());
        let want = [(1.0 - m1) / 2.0, (1.0 - m1) / 2.0, m1 / 2.0, m1 / 2.0];
        for (p, w) in m.probs().iter().zip(want) {
            assert!((p - w).abs() < 1e-12);
        }
    }

    /// A distribution that is NOT the max-entropy point must be caught: plant
    /// a non-exponential-family table behind a model's features.
    #[test]
    fn ascent_finds_higher_entropy_point() {
        let s = FiniteSpace::from_pairs([("a", 2), ("b", 2)]).unwrap();
        let table: Vec<Vec<f64>> = (0..4)
            .map(|x| vec![s.index_to_tuple(x).unwrap()[0] as f64])
            .collect();
        let m =
            ExpFamilyModel::zero(s.clone(), FeatureMap::from_table(&s, &table).unwrap()).unwrap();
        let cons = Constraints::new(&m);
        let skewed = vec![0.4, 0.1, 0.25, 0.25];
        let q = ascend(&cons, skewed.clone());
        assert!(entropy(&q) > entropy(&skewed) + 1e-3);
        assert!((entropy(&q) - 4f64.ln()).abs() < 1e-9);
    }
}
