//! Local generative models.
//!
//! Learners see every model through [`GenerativeModel`]: they can take a
//! fitting step toward an empirical distribution and draw samples. Two
//! concrete families are provided: a saturated [`TabularModel`] and a
//! log-linear [`ExpFamilyModel`] over a user feature map.

mod exp_family;
mod features;
mod maxent;
mod tabular;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use exp_family::{grad_log_likelihood, ExpFamilyModel};
pub use features::{FeatureMap, FeatureSpec, NamedFeatures};
pub use maxent::{max_entropy_check, MaxEntReport};
pub use tabular::TabularModel;

use crate::batch::SampleBatch;
use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::space::FiniteSpace;

pub trait GenerativeModel {
    fn space(&self) -> &FiniteSpace;

    /// Probability table in flat-index order.
    fn probs(&self) -> &[f64];

    fn log_prob(&self, outcome: usize) -> f64;

    /// One fitting step toward `target`.
    fn fit_step(&mut self, target: &TabularDistribution, step_size: f64) -> Result<()>;

    fn distribution(&self) -> TabularDistribution {
        TabularDistribution::from_parts_unchecked(self.space().clone(), self.probs().to_vec())
    }

    fn sample_outcomes(&self, n: usize, rng: &mut dyn RngCore) -> Vec<u32> {
        sample_categorical(self.probs(), n, rng)
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> SampleBatch {
        SampleBatch::new(self.space(), self.sample_outcomes(n, rng), 0, 0)
    }
}

/// Inverse-CDF sampling of `n` flat outcomes. Zero-probability outcomes are
/// never returned.
pub fn sample_categorical(probs: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<u32> {
    if n == 0 {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(last) as u32
        })
        .collect()
}

/// `sum_x target(x) log p(x)`; `-inf` when the model gives zero probability
/// to an outcome in the target's support.
pub fn log_likelihood<M: GenerativeModel + ?Sized>(model: &M, target: &TabularDistribution) -> f64 {
    if model.space() != target.space() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (x, &t) in target.probs().iter().enumerate() {
        if t > 0.0 {
            let lp = model.log_prob(x);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += t * lp;
        }
    }
    acc
}

/// Checked variant of [`log_likelihood`].
pub fn try_log_likelihood<M: GenerativeModel + ?Sized>(
    model: &M,
    target: &TabularDistribution,
) -> Result<f64> {
    if model.space() != target.space() {
        return Err(Error::Shape(
            "model and target live on different spaces".into(),
        ));
    }
    Ok(log_likelihood(model, target))
}

/// Model family as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    #[default]
    Tabular,
    LogLinear {
        features: FeatureSpec,
    },
}

/// Initial model state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum InitSpec {
    #[default]
    #[serde(with = "uniform_tag")]
    Uniform,
    Probs {
        probs: Vec<f64>,
    },
    Theta {
        theta: Vec<f64>,
    },
}

mod uniform_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("uniform")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "uniform" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"uniform\""))
        }
    }
}

/// Either concrete family behind one type, so engines can hold a homogeneous
/// list of players and take cheap snapshots.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tabular(TabularModel),
    LogLinear(ExpFamilyModel),
}

impl Model {
    pub fn build(space: &FiniteSpace, spec: &ModelSpec, init: &InitSpec) -> Result<Self> {
        match spec {
            ModelSpec::Tabular => {
                let dist = match init {
                    InitSpec::Uniform => TabularDistribution::uniform(space.clone()),
                    InitSpec::Probs { probs } => {
                        TabularDistribution::new(space.clone(), probs.clone())?
                    }
                    InitSpec::Theta { .. } => {
                        return Err(Error::Schema(
                            "tabular models are initialized by probabilities, not theta".into(),
                        ))
                    }
                };
                Ok(Model::Tabular(TabularModel::from_distribution(dist)))
            }
            ModelSpec::LogLinear { features } => {
                let map = FeatureMap::build(space, features)?;
                let theta = match init {
                    InitSpec::Uniform => vec![0.0; map.dim()],
                    InitSpec::Theta { theta } => theta.clone(),
                    InitSpec::Probs { .. } => {
                        return Err(Error::Schema(
                            "log-linear models are initialized by theta, not probabilities".into(),
                        ))
                    }
                };
                Ok(Model::LogLinear(ExpFamilyModel::new(
                    space.clone(),
                    map,
                    theta,
                )?))
            }
        }
    }

    fn inner(&self) -> &dyn GenerativeModel {
        match self {
            Model::Tabular(m) => m,
            Model::LogLinear(m) => m,
        }
    }
}

impl GenerativeModel for Model {
    fn space(&self) -> &FiniteSpace {
        self.inner().space()
    }

    fn probs(&self) -> &[f64] {
        self.inner().probs()
    }

    fn log_prob(&self, outcome: usize) -> f64 {
        self.inner().log_prob(outcome)
    }

    fn fit_step(&mut self, target: &TabularDistribution, step_size: f64) -> Result<()> {
        match self {
            Model::Tabular(m) => m.fit_step(target, step_size),
            Model::LogLinear(m) => m.fit_step(target, step_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_categorical(&[0.5, 0.5], 0, &mut rng).is_empty());
        let draws = sample_categorical(&[0.0, 0.0, 1.0, 0.0], 1000, &mut rng);
        assert!(draws.iter().all(|&d| d == 2));
    }

    #[test]
    fn uniform_four_point_frequencies() {
        let s = FiniteSpace::single(4).unwrap();
        let m = TabularModel::from_distribution(TabularDistribution::uniform(s));
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let batch = m.sample(100_000, &mut rng);
        let mut counts = [0usize; 4];
        for &o in &batch.outcomes {
            counts[o as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = FiniteSpace::single(5).unwrap();
        let m = TabularModel::from_distribution(
            TabularDistribution::from_weights(s, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        );
        let a = m.sample(500, &mut ChaCha8Rng::seed_from_u64(7));
        let b = m.sample(500, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn spec_parsing() {
        let spec: ModelSpec = serde_json::from_str(r#"{"family":"tabular"}"#).unwrap();
        assert_eq!(spec, ModelSpec::Tabular);
        let spec: ModelSpec =
            serde_json::from_str(r#"{"family":"log-linear","features":"saturated"}"#).unwrap();
        assert!(matches!(spec, ModelSpec::LogLinear { .. }));
        let init: InitSpec = serde_json::from_str("\"uniform\"").unwrap();
        assert_eq!(init, InitSpec::Uniform);
        let init: InitSpec = serde_json::from_str(r#"{"probs":[0.5,0.5]}"#).unwrap();
        assert!(matches!(init, InitSpec::Probs { .. }));
        assert!(serde_json::from_str::<InitSpec>("\"random\"").is_err());
    }

    #[test]
    fn build_rejects_mismatched_init() {
        let s = FiniteSpace::single(2).unwrap();
        assert!(Model::build(
            &s,
            &ModelSpec::Tabular,
            &InitSpec::Theta { theta: vec![0.0] }
        )
        .is_err());
        let ll = ModelSpec::LogLinear {
            features: FeatureSpec::Named(NamedFeatures::Saturated),
        };
        assert!(Model::build(
            &s,
            &ll,
            &InitSpec::Probs {
                probs: vec![0.5, 0.5]
            }
        )
        .is_err());
        assert!(Model::build(&s, &ll, &InitSpec::Theta { theta: vec![0.0] }).is_err());
    }
}
