//! Players defined on different subsets of a shared variable collection.
//!
//! A player on `x_i` scores a peer's sample on `x_j` only through the shared
//! variables `x_ij = x_i ∩ x_j`: the other components are discarded and the
//! model's exact marginal on `x_ij` is evaluated. Learning from such partial
//! observations spreads each one over its consistent completions in
//! proportion to the model's conditional (fractional counts).

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::model::GenerativeModel;
use crate::space::{FiniteSpace, Variable};

/// Variables of `parent` that a player operates on, kept in parent order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSubset", into = "RawSubset")]
pub struct VariableSubset {
    parent: FiniteSpace,
    members: Vec<String>,
    space: FiniteSpace,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubset {
    parent: FiniteSpace,
    members: Vec<String>,
}

impl TryFrom<RawSubset> for VariableSubset {
    type Error = Error;

    fn try_from(raw: RawSubset) -> Result<Self> {
        VariableSubset::new(&raw.parent, &raw.members)
    }
}

impl From<VariableSubset> for RawSubset {
    fn from(s: VariableSubset) -> Self {
        RawSubset {
            parent: s.parent,
            members: s.members,
        }
    }
}

impl VariableSubset {
    pub fn new<S: AsRef<str>>(parent: &FiniteSpace, members: &[S]) -> Result<Self> {
        for m in members {
            if parent.position(m.as_ref()).is_none() {
                return Err(Error::Schema(format!(
                    "variable '{}' is not part of the collection",
                    m.as_ref()
                )));
            }
        }
        let wanted: Vec<&str> = members.iter().map(AsRef::as_ref).collect();
        let vars: Vec<Variable> = parent
            .variables()
            .iter()
            .filter(|v| wanted.contains(&v.name.as_str()))
            .cloned()
            .collect();
        if vars.len() != wanted.len() {
            return Err(Error::Schema("duplicate variable in subset".into()));
        }
        let names = vars.iter().map(|v| v.name.clone()).collect();
        Ok(Self {
            parent: parent.clone(),
            members: names,
            space: FiniteSpace::new(vars)?,
        })
    }

    pub fn full(parent: &FiniteSpace) -> Self {
        Self {
            parent: parent.clone(),
            members: parent.variables().iter().map(|v| v.name.clone()).collect(),
            space: parent.clone(),
        }
    }

    pub fn parent(&self) -> &FiniteSpace {
        &self.parent
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    /// Space over the member variables.
    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn is_full(&self) -> bool {
        self.space == self.parent
    }

    /// Shared variables, in parent order; `None` when disjoint.
    pub fn overlap(&self, other: &VariableSubset) -> Option<VariableSubset> {
        let shared: Vec<&String> = self
            .members
            .iter()
            .filter(|m| other.members.contains(m))
            .collect();
        if shared.is_empty() {
            None
        } else {
            VariableSubset::new(&self.parent, &shared).ok()
        }
    }
}

/// Variables of `b` that also occur in `a`, in `a`'s order.
pub fn overlap_space(a: &FiniteSpace, b: &FiniteSpace) -> Option<FiniteSpace> {
    let vars: Vec<Variable> = a
        .variables()
        .iter()
        .filter(|v| b.variables().contains(v))
        .cloned()
        .collect();
    if vars.is_empty() {
        None
    } else {
        FiniteSpace::new(vars).ok()
    }
}

/// Maps every outcome of `from` to the outcome of `onto` obtained by keeping
/// only `onto`'s variables.
pub fn projection(from: &FiniteSpace, onto: &FiniteSpace) -> Result<Vec<usize>> {
    let mut picks = Vec::with_capacity(onto.variables().len());
    for v in onto.variables() {
        let pos = from.position(&v.name).ok_or_else(|| {
            Error::Schema(format!("variable '{}' is not in the source space", v.name))
        })?;
        if from.variables()[pos].card != v.card {
            return Err(Error::Schema(format!(
                "variable '{}' has different cardinalities",
                v.name
            )));
        }
        picks.push(pos);
    }
    let cards = from.cardinalities();
    let mut tuple = vec![0usize; cards.len()];
    let mut map = Vec::with_capacity(from.total_size());
    for _ in 0..from.total_size() {
        let mut idx = 0;
        for (&pos, v) in picks.iter().zip(onto.variables()) {
            idx = idx * v.card + tuple[pos];
        }
        map.push(idx);
        // odometer increment, last variable fastest
        for k in (0..cards.len()).rev() {
            tuple[k] += 1;
            if tuple[k] < cards[k] {
                break;
            }
            tuple[k] = 0;
        }
    }
    Ok(map)
}

/// Exact marginal of `dist` on the variables of `onto`.
pub fn marginalize(dist: &TabularDistribution, onto: &FiniteSpace) -> Result<TabularDistribution> {
    if onto == dist.space() {
        return Ok(dist.clone());
    }
    let map = projection(dist.space(), onto)?;
    let mut out = vec![0.0; onto.total_size()];
    for (x, &p) in dist.probs().iter().enumerate() {
        out[map[x]] += p;
    }
    TabularDistribution::from_weights(onto.clone(), out)
}

/// [`marginalize`] onto a subset of the distribution's own space.
pub fn marginalize_subset(
    dist: &TabularDistribution,
    target: &VariableSubset,
) -> Result<TabularDistribution> {
    if target.parent() != dist.space() {
        return Err(Error::Schema(
            "subset does not refer to this distribution's space".into(),
        ));
    }
    marginalize(dist, target.space())
}

/// Average log marginal probability the model assigns to a peer batch,
/// scoring only the shared variables.
pub fn marginal_log_likelihood<M: GenerativeModel + ?Sized>(
    model: &M,
    batch_space: &FiniteSpace,
    batch: &SampleBatch,
) -> Result<f64> {
    batch.validate(batch_space)?;
    let overlap = overlap_space(model.space(), batch_space).ok_or_else(|| {
        Error::NoOverlap(format!(
            "model space and batch space of player {}",
            batch.source_player
        ))
    })?;
    if batch.is_empty() {
        return Ok(0.0);
    }
    let marginal = marginalize(&model.distribution(), &overlap)?;
    let proj = projection(batch_space, &overlap)?;
    let mut acc = 0.0;
    for &o in &batch.outcomes {
        let p = marginal.prob(proj[o as usize]);
        if p <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += p.ln();
    }
    Ok(acc / batch.len() as f64)
}

/// Training data for one marginal fitting step: counts of fully observed
/// outcomes on the model's space, plus counts of partial observations on
/// overlap spaces.
#[derive(Debug, Clone)]
pub struct MarginalData {
    pub full_counts: Vec<f64>,
    pub partial: Vec<(FiniteSpace, Vec<f64>)>,
}

impl MarginalData {
    pub fn new(space: &FiniteSpace) -> Self {
        Self {
            full_counts: vec![0.0; space.total_size()],
            partial: Vec::new(),
        }
    }
}

/// Expected complete-data target: every partial observation is spread over
/// its consistent completions by the model's conditional. Returns the target
/// and the number of partial observation values that had zero marginal
/// probability and fell back to a uniform spread.
pub fn completed_target<M: GenerativeModel + ?Sized>(
    model: &M,
    data: &MarginalData,
) -> Result<(TabularDistribution, usize)> {
    let space = model.space();
    if data.full_counts.len() != space.total_size() {
        return Err(Error::Shape(
            "full-observation counts do not match the model space".into(),
        ));
    }
    let probs = model.probs();
    let mut counts = data.full_counts.clone();
    let mut fallbacks = 0;
    for (overlap, obs) in &data.partial {
        if overlap == space {
            for (c, o) in counts.iter_mut().zip(obs) {
                *c += o;
            }
            continue;
        }
        let proj = projection(space, overlap)?;
        if obs.len() != overlap.total_size() {
            return Err(Error::Shape(
                "partial-observation counts do not match the overlap".into(),
            ));
        }
        let mut marginal = vec![0.0; overlap.total_size()];
        let mut class_size = vec![0usize; overlap.total_size()];
        for (x, &p) in probs.iter().enumerate() {
            marginal[proj[x]] += p;
            class_size[proj[x]] += 1;
        }
        for (v, (&c, &m)) in obs.iter().zip(&marginal).enumerate() {
            if c > 0.0 && m <= 0.0 {
                log::debug!(
                    "partial observation {v} has zero marginal probability; spreading uniformly"
                );
                fallbacks += 1;
            }
        }
        for (x, &p) in probs.iter().enumerate() {
            let v = proj[x];
            let c = obs[v];
            if c == 0.0 {
                continue;
            }
            counts[x] += if marginal[v] > 0.0 {
                c * (p / marginal[v])
            } else {
                c / class_size[v] as f64
            };
        }
    }
    Ok((
        TabularDistribution::from_weights(space.clone(), counts)?,
        fallbacks,
    ))
}

/// One step on the weighted sum of full and marginal log-likelihoods.
/// Returns the number of zero-probability fallbacks.
pub fn fit_step_marginal<M: GenerativeModel + ?Sized>(
    model: &mut M,
    data: &MarginalData,
    step_size: f64,
) -> Result<usize> {
    let (target, fallbacks) = completed_target(&*model, data)?;
    model.fit_step(&target, step_size)?;
    Ok(fallbacks)
}

/// Observed values for some of a space's variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialObservation {
    pub values: BTreeMap<String, usize>,
}

impl PartialObservation {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = (S, usize)>) -> Self {
        Self {
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn validate(&self, space: &FiniteSpace) -> Result<()> {
        for (name, &value) in &self.values {
            let pos = space
                .position(name)
                .ok_or_else(|| Error::Schema(format!("variable '{name}' is not in the space")))?;
            let card = space.variables()[pos].card;
            if value >= card {
                return Err(Error::Range(format!(
                    "value {value} for '{name}' outside [0, {card})"
                )));
            }
        }
        Ok(())
    }

    /// Flat outcomes of `space` consistent with the observation.
    pub fn consistent_outcomes(&self, space: &FiniteSpace) -> Result<Vec<usize>> {
        self.validate(space)?;
        let fixed: Vec<(usize, usize)> = self
            .values
            .iter()
            .map(|(n, &v)| (space.position(n).expect("validated"), v))
            .collect();
        Ok((0..space.total_size())
            .filter(|&x| {
                let t = space.index_to_tuple(x).expect("in range");
                fixed.iter().all(|&(pos, v)| t[pos] == v)
            })
            .collect())
    }
}

/// Samples the unobserved variables from the model's exact conditional and
/// returns the completed flat outcome.
pub fn complete<M: GenerativeModel + ?Sized>(
    model: &M,
    obs: &PartialObservation,
    rng: &mut dyn RngCore,
) -> Result<usize> {
    let candidates = obs.consistent_outcomes(model.space())?;
    let probs = model.probs();
    let total: f64 = candidates.iter().map(|&x| probs[x]).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroSupport(format!("{:?}", obs.values)));
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = candidates[0];
    for &x in &candidates {
        if probs[x] > 0.0 {
            last_positive = x;
            acc += probs[x];
            if u < acc {
                return Ok(x);
            }
        }
    }
    Ok(last_positive)
}
