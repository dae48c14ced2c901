use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteSpace;

/// A batch of synthetic outcomes. This is the only payload that crosses a
/// node boundary: flat outcome indices, the space they live on, who drew them
/// and under which seed tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBatch {
    #[serde(deserialize_with = "de_space_id")]
    pub space_id: String,
    pub outcomes: Vec<u32>,
    pub source_player: u32,
    pub seed_tag: u64,
}

fn de_space_id<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    let id = String::deserialize(d)?;
    if is_space_id(&id) {
        Ok(id)
    } else {
        Err(serde::de::Error::custom(
            "space_id must be 16 lowercase hex digits",
        ))
    }
}

pub fn is_space_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl SampleBatch {
    pub fn new(space: &FiniteSpace, outcomes: Vec<u32>, source_player: u32, seed_tag: u64) -> Self {
        Self {
            space_id: space.id(),
            outcomes,
            source_player,
            seed_tag,
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Checks that the batch refers to `space` and every outcome is in range.
    pub fn validate(&self, space: &FiniteSpace) -> Result<()> {
        if self.space_id != space.id() {
            return Err(Error::Schema(format!(
                "batch from player {} is on space {}, expected {}",
                self.source_player,
                self.space_id,
                space.id()
            )));
        }
        if let Some(o) = self
            .outcomes
            .iter()
            .find(|&&o| o as usize >= space.total_size())
        {
            return Err(Error::Range(format!(
                "outcome {o} outside [0, {})",
                space.total_size()
            )));
        }
        Ok(())
    }
}
