use rand::RngCore;

use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::model::sample_categorical;

/// Splits `batch_size` into per-source counts proportional to `alpha_row`
/// by largest remainder; ties go to the lowest index.
pub fn allocate(alpha_row: &[f64], batch_size: usize) -> Vec<usize> {
    let exact: Vec<f64> = alpha_row.iter().map(|a| a * batch_size as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..alpha_row.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &k in order.iter().take(batch_size.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Pooled training batch for one inner step.
#[derive(Debug, Clone)]
pub struct MixedBatch {
    /// Outcome counts, own samples first, then peers in index order.
    pub counts: Vec<f64>,
    pub allocation: Vec<usize>,
}

impl MixedBatch {
    pub fn distribution(&self, space: &crate::space::FiniteSpace) -> Result<TabularDistribution> {
        TabularDistribution::from_weights(space.clone(), self.counts.clone())
    }
}

/// Draws the own-data share from `own` and takes each peer's share from the
/// front of its provided outcomes. `peers[j]` is ignored for `j == own_index`.
pub fn mix_batch(
    own: Option<&TabularDistribution>,
    own_index: usize,
    peers: &[Option<&[u32]>],
    alpha_row: &[f64],
    batch_size: usize,
    space_size: usize,
    rng: &mut dyn RngCore,
) -> Result<MixedBatch> {
    if peers.len() != alpha_row.len() {
        return Err(Error::Shape(
            "one peer slot per alpha entry is required".into(),
        ));
    }
    let allocation = allocate(alpha_row, batch_size);
    let mut counts = vec![0.0; space_size];
    let own_count = allocation[own_index];
    if own_count > 0 {
        let own = own.ok_or_else(|| {
            Error::Schema(format!(
                "player {own_index} has positive self-weight but no data"
            ))
        })?;
        for o in sample_categorical(own.probs(), own_count, rng) {
            counts[o as usize] += 1.0;
        }
    }
    for (j, (&need, slot)) in allocation.iter().zip(peers).enumerate() {
        if j == own_index || need == 0 {
            continue;
        }
        let available = slot.map_or(0, <[u32]>::len);
        if available < need {
            return Err(Error::InsufficientSamples {
                peer: j,
                needed: need,
                available,
            });
        }
        for &o in &slot.expect("length checked")[..need] {
            let c = counts.get_mut(o as usize).ok_or_else(|| {
                Error::Range(format!("outcome {o} from player {j} outside the space"))
            })?;
            *c += 1.0;
        }
    }
    Ok(MixedBatch { counts, allocation })
}
