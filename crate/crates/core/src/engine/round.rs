//! One player's turn: fetch peer batches once, then take `inner_steps`
//! fitting steps on freshly mixed batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::hetero::{fit_step_marginal, marginalize, projection, MarginalData, VariableSubset};
use crate::model::{sample_categorical, Model};
use crate::transport::PeerTransport;

use super::mixing::allocate;
use super::seeds::{own_data_seed, peer_seed_tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    #[default]
    Constant,
    /// `size / sqrt(t)` where `t` counts the player's fitting steps.
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub size: f64,
    #[serde(default)]
    pub decay: Decay,
}

impl StepRule {
    pub fn constant(size: f64) -> Self {
        Self {
            size,
            decay: Decay::Constant,
        }
    }

    /// Step size for the player's `t`-th fitting step (1-based).
    pub fn at(&self, t: u64) -> f64 {
        match self.decay {
            Decay::Constant => self.size,
            Decay::InvSqrt => self.size / (t.max(1) as f64).sqrt(),
        }
    }
}

/// Mutable per-player state owned by whichever process hosts the player.
#[derive(Debug, Clone)]
pub struct PlayerState {
    pub index: usize,
    pub subset: VariableSubset,
    /// Private target on the player's own variables; `None` for data-free
    /// players.
    pub data: Option<TabularDistribution>,
    pub model: Model,
    pub batch_size: usize,
    pub inner_steps: usize,
    pub step: StepRule,
    /// Fitting steps taken so far.
    pub updates: u64,
}

/// How training batches are formed.
pub enum PeerSource<'a> {
    /// Sampled batches pulled through a transport.
    Sampled(&'a dyn PeerTransport),
    /// Exact `alpha`-weighted mixtures of the given peer tables, which removes
    /// sampling noise entirely. Tables are on each peer's own variables.
    Exact(&'a [TabularDistribution]),
}

pub struct RoundContext<'a> {
    pub round: u64,
    pub master_seed: u64,
    pub alpha_row: &'a [f64],
    /// Variable subsets of all players, by index.
    pub subsets: &'a [VariableSubset],
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub model: Model,
    pub updates: u64,
    pub fallbacks: usize,
}

/// Where a peer's observations land in the player's training data.
enum Route {
    Full,
    Partial {
        overlap: crate::space::FiniteSpace,
        proj: Vec<usize>,
    },
}

fn route(own: &VariableSubset, peer: &VariableSubset, peer_index: usize) -> Result<Route> {
    if own.space() == peer.space() {
        return Ok(Route::Full);
    }
    let overlap = own.overlap(peer).ok_or_else(|| {
        Error::NoOverlap(format!(
            "player {peer_index} shares no variables with this player but has positive weight"
        ))
    })?;
    let proj = projection(peer.space(), overlap.space())?;
    Ok(Route::Partial {
        overlap: overlap.space().clone(),
        proj,
    })
}

/// Runs one round for `state` and returns the updated model without touching
/// `state`, so a failure leaves the player as it was.
pub fn player_round(
    state: &PlayerState,
    ctx: &RoundContext<'_>,
    peers: PeerSource<'_>,
) -> Result<RoundOutcome> {
    let i = state.index;
    let n = ctx.alpha_row.len();
    if ctx.subsets.len() != n {
        return Err(Error::Shape("one subset per player is required".into()));
    }
    if state.data.is_none() && ctx.alpha_row[i] > 0.0 {
        return Err(Error::Schema(format!(
            "player {i} has positive self-weight but no data"
        )));
    }
    let routes: Vec<Option<Route>> = (0..n)
        .map(|j| {
            if j == i || ctx.alpha_row[j] == 0.0 {
                Ok(None)
            } else {
                route(&state.subset, &ctx.subsets[j], j).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let own_space = state.subset.space();
    let mut model = state.model.clone();
    let mut updates = state.updates;
    let mut fallbacks = 0;

    match peers {
        PeerSource::Exact(tables) => {
            let mut data = MarginalData::new(own_space);
            if let Some(pi) = &state.data {
                let w = ctx.alpha_row[i];
                for (c, &p) in data.full_counts.iter_mut().zip(pi.probs()) {
                    *c += w * p;
                }
            }
            for (j, r) in routes.iter().enumerate() {
                let Some(r) = r else { continue };
                let w = ctx.alpha_row[j];
                match r {
                    Route::Full => {
                        for (c, &p) in data.full_counts.iter_mut().zip(tables[j].probs()) {
                            *c += w * p;
                        }
                    }
                    Route::Partial { overlap, .. } => {
                        let m = marginalize(&tables[j], overlap)?;
                        data.partial
                            .push((overlap.clone(), m.probs().iter().map(|p| w * p).collect()));
                    }
                }
            }
            for _ in 0..state.inner_steps {
                updates += 1;
                fallbacks += fit_step_marginal(&mut model, &data, state.step.at(updates))?;
            }
        }
        PeerSource::Sampled(transport) => {
            let allocation = allocate(ctx.alpha_row, state.batch_size);
            let requests: Vec<(usize, usize)> = (0..n)
                .filter(|&j| j != i && allocation[j] > 0)
                .map(|j| (j, allocation[j] * state.inner_steps))
                .collect();
            let fetched: Vec<(usize, Vec<u32>)> = requests
                .par_iter()
                .map(|&(j, count)| {
                    let tag = peer_seed_tag(ctx.master_seed, ctx.round, i, j);
                    let batch = transport.request_samples(j, count, tag)?;
                    batch.validate(ctx.subsets[j].space())?;
                    if batch.source_player as usize != j || batch.outcomes.len() != count {
                        return Err(Error::Transport {
                            peer: j,
                            message: format!(
                                "expected {count} outcomes from player {j}, got {} from player {}",
                                batch.outcomes.len(),
                                batch.source_player
                            ),
                        });
                    }
                    Ok((j, batch.outcomes))
                })
                .collect::<Result<_>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(own_data_seed(ctx.master_seed, ctx.round, i));
            for step in 0..state.inner_steps {
                let mut data = MarginalData::new(own_space);
                if allocation[i] > 0 {
                    let pi = state.data.as_ref().expect("checked above");
                    for o in sample_categorical(pi.probs(), allocation[i], &mut rng) {
                        data.full_counts[o as usize] += 1.0;
                    }
                }
                for (j, outcomes) in &fetched {
                    let need = allocation[*j];
                    let slice = &outcomes[step * need..(step + 1) * need];
                    match routes[*j].as_ref().expect("requested peers have routes") {
                        Route::Full => {
                            for &o in slice {
                                data.full_counts[o as usize] += 1.0;
                            }
                        }
                        Route::Partial { overlap, proj } => {
                            let mut counts = vec![0.0; overlap.total_size()];
                            for &o in slice {
                                counts[proj[o as usize]] += 1.0;
                            }
                            data.partial.push((overlap.clone(), counts));
                        }
                    }
                }
                updates += 1;
                fallbacks += fit_step_marginal(&mut model, &data, state.step.at(updates))?;
            }
        }
    }
    Ok(RoundOutcome {
        model,
        updates,
        fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GenerativeModel, TabularModel};
    use crate::space::FiniteSpace;
    use crate::transport::{InProcessTransport, ModelHandle, Responder, Schema};

    fn player(index: usize, space: &FiniteSpace, data: Vec<f64>, step: f64) -> PlayerState {
        PlayerState {
            index,
            subset: VariableSubset::full(space),
            data: Some(TabularDistribution::from_weights(space.clone(), data).unwrap()),
            model: Model::Tabular(TabularModel::uniform(space.clone())),
            batch_size: 64,
            inner_steps: 4,
            step: StepRule::constant(step),
            updates: 0,
        }
    }

    #[test]
    fn decay_rules() {
        let c = StepRule::constant(0.3);
        assert_eq!(c.at(1), 0.3);
        assert_eq!(c.at(100), 0.3);
        let d = StepRule {
            size: 0.4,
            decay: Decay::InvSqrt,
        };
        assert_eq!(d.at(1), 0.4);
        assert!((d.at(4) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_row_sends_no_messages() {
        let s = FiniteSpace::single(3).unwrap();
        let p0 = player(0, &s, vec![1.0, 2.0, 3.0], 1.0);
        let handles = vec![
            ModelHandle::new(0, Schema::Space(s.clone()), p0.model.clone()),
            ModelHandle::new(1, Schema::Space(s.clone()), p0.model.clone()),
        ];
        let t = InProcessTransport::new(Responder::new(handles));
        let subsets = vec![VariableSubset::full(&s); 2];
        let ctx = RoundContext {
            round: 1,
            master_seed: 3,
            alpha_row: &[1.0, 0.0],
            subsets: &subsets,
        };
        let out = player_round(&p0, &ctx, PeerSource::Sampled(&t)).unwrap();
        assert_eq!(t.message_count(), 0);
        assert_eq!(out.updates, 4);
        // step 1 replaces the table by the last own batch
        let total: f64 = out.model.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_mixture_step_is_best_response() {
        let s = FiniteSpace::single(2).unwrap();
        let mut p0 = player(0, &s, vec![1.0, 0.0], 1.0);
        p0.inner_steps = 1;
        let peer = TabularDistribution::new(s.clone(), vec![0.25, 0.75]).unwrap();
        let tables = vec![p0.data.clone().unwrap(), peer];
        let subsets = vec![VariableSubset::full(&s); 2];
        let ctx = RoundContext {
            round: 1,
            master_seed: 0,
            alpha_row: &[0.5, 0.5],
            subsets: &subsets,
        };
        let out = player_round(&p0, &ctx, PeerSource::Exact(&tables)).unwrap();
        assert!((out.model.probs()[0] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn self_weight_without_data_fails() {
        let s = FiniteSpace::single(2).unwrap();
        let mut p0 = player(0, &s, vec![1.0, 1.0], 1.0);
        p0.data = None;
        let subsets = vec![VariableSubset::full(&s); 1];
        let tables = vec![TabularDistribution::uniform(s.clone())];
        let ctx = RoundContext {
            round: 1,
            master_seed: 0,
            alpha_row: &[1.0],
            subsets: &subsets,
        };
        assert!(player_round(&p0, &ctx, PeerSource::Exact(&tables)).is_err());
    }
}
