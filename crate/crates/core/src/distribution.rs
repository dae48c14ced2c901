use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteSpace;

/// Tolerance for "sums to one" checks on already-normalized vectors.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// A probability vector over a finite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDistribution {
    space: FiniteSpace,
    probs: Vec<f64>,
}

impl TabularDistribution {
    /// Normalizes any nonnegative, non-zero weight vector.
    pub fn from_weights(space: FiniteSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.total_size() {
            return Err(Error::Shape(format!(
                "{} weights for a space of size {}",
                weights.len(),
                space.total_size()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {w}, expected a finite nonnegative weight"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { space, probs })
    }

    /// Wraps a vector that must already sum to one within [`NORM_TOLERANCE`].
    /// The vector is still renormalized.
    pub fn new(space: FiniteSpace, probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Self::from_weights(space, probs)
    }

    pub fn uniform(space: FiniteSpace) -> Self {
        let n = space.total_size();
        Self {
            space,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(space: FiniteSpace, outcome: usize) -> Result<Self> {
        if outcome >= space.total_size() {
            return Err(Error::Range(format!(
                "outcome {outcome} outside [0, {})",
                space.total_size()
            )));
        }
        let mut probs = vec![0.0; space.total_size()];
        probs[outcome] = 1.0;
        Ok(Self { space, probs })
    }

    /// Empirical distribution of a list of flat outcomes.
    pub fn empirical(space: FiniteSpace, outcomes: &[u32]) -> Result<Self> {
        let mut counts = vec![0.0; space.total_size()];
        for &o in outcomes {
            let slot = counts.get_mut(o as usize).ok_or_else(|| {
                Error::Range(format!("outcome {o} outside [0, {})", space.total_size()))
            })?;
            *slot += 1.0;
        }
        Self::from_weights(space, counts)
    }

    pub(crate) fn from_parts_unchecked(space: FiniteSpace, probs: Vec<f64>) -> Self {
        debug_assert_eq!(space.total_size(), probs.len());
        Self { space, probs }
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn prob(&self, outcome: usize) -> f64 {
        self.probs[outcome]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        (self.probs.iter().sum::<f64>() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -cross_term(&self.probs, &self.probs)
    }

    /// Convex combination `sum_k weights[k] * dists[k]`.
    pub fn mixture(dists: &[&TabularDistribution], weights: &[f64]) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::Shape("mixture of zero distributions".into()))?;
        if dists.len() != weights.len() {
            return Err(Error::Shape(
                "mixture weights and components differ in length".into(),
            ));
        }
        let mut out = vec![0.0; first.len()];
        for (d, &w) in dists.iter().zip(weights) {
            if d.space != first.space {
                return Err(Error::Shape(
                    "mixture components live on different spaces".into(),
                ));
            }
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&d.probs) {
                *o += w * p;
            }
        }
        Self::from_weights(first.space.clone(), out)
    }
}

/// `sum_x q(x) log p(x)` with `0 log 0 = 0`; `-inf` when `q(x) > 0 = p(x)`.
pub fn cross_term(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&qx, &px) in q.iter().zip(p) {
        if qx > 0.0 {
            if px <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += qx * px.ln();
        }
    }
    acc
}

/// `KL(p || q)` in nats; `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&px, &qx) in p.iter().zip(q) {
        if px > 0.0 {
            if qx <= 0.0 {
                return f64::INFINITY;
            }
            acc += px * (px / qx).ln();
        }
    }
    acc.max(0.0)
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(k: usize) -> FiniteSpace {
        FiniteSpace::single(k).unwrap()
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(TabularDistribution::from_weights(space(2), vec![0.0, 0.0]).is_err());
        assert!(TabularDistribution::from_weights(space(2), vec![-1.0, 2.0]).is_err());
        assert!(TabularDistribution::from_weights(space(2), vec![f64::NAN, 1.0]).is_err());
        assert!(TabularDistribution::from_weights(space(3), vec![1.0, 1.0]).is_err());
        assert!(TabularDistribution::new(space(2), vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn kl_and_cross_term_edge_cases() {
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
        assert_eq!(cross_term(&[0.5, 0.5], &[1.0, 0.0]), f64::NEG_INFINITY);
        assert_eq!(cross_term(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        let u = TabularDistribution::uniform(space(4));
        assert!((u.entropy() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empirical_counts() {
        let d = TabularDistribution::empirical(space(3), &[0, 2, 2, 2]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.0, 0.75]);
        assert!(TabularDistribution::empirical(space(3), &[3]).is_err());
        assert!(TabularDistribution::empirical(space(3), &[]).is_err());
    }

    proptest! {
        #[test]
        fn construction_normalizes(
            weights in prop::collection::vec(0.0f64..1e6, 1..200),
            bump in 0usize..200,
        ) {
            let mut weights = weights;
            let k = weights.len();
            weights[bump % k] += 1.0;
            let d = TabularDistribution::from_weights(space(k), weights).unwrap();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        }
    }
}
