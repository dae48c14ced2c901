use serde::{Deserialize, Serialize};

use crate::alpha::AlphaMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from_round: u64,
    pub alpha: AlphaMatrix,
}

/// Piecewise-constant alpha over rounds. The matrix of a segment applies
/// from its threshold (inclusive) until the next threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSchedule {
    segments: Vec<Segment>,
}

impl AlphaSchedule {
    pub fn constant(alpha: AlphaMatrix) -> Self {
        Self {
            segments: vec![Segment {
                from_round: 0,
                alpha,
            }],
        }
    }

    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidAlpha("schedule has no segments".into()))?;
        if first.from_round != 0 {
            return Err(Error::InvalidAlpha("schedule must start at round 0".into()));
        }
        for w in segments.windows(2) {
            if w[1].from_round <= w[0].from_round {
                return Err(Error::InvalidAlpha(format!(
                    "thresholds must increase strictly ({} then {})",
                    w[0].from_round, w[1].from_round
                )));
            }
        }
        let n = first.alpha.n_players();
        if segments.iter().any(|s| s.alpha.n_players() != n) {
            return Err(Error::InvalidAlpha(
                "segments disagree on the number of players".into(),
            ));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_players(&self) -> usize {
        self.segments[0].alpha.n_players()
    }

    /// Index of the segment active at `round`.
    pub fn segment_index(&self, round: u64) -> usize {
        self.segments.partition_point(|s| s.from_round <= round) - 1
    }

    pub fn alpha_at(&self, round: u64) -> &AlphaMatrix {
        &self.segments[self.segment_index(round)].alpha
    }
}
