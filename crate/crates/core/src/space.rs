//! Finite outcome spaces over named discrete variables.
//!
//! Outcomes are addressed either by a flat index in `[0, total_size)` or by a
//! tuple with one value per variable. Flat indices are row-major with the
//! first declared variable as the most significant digit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub card: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct FiniteSpace {
    variables: Vec<Variable>,
    total_size: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    variables: Vec<Variable>,
}

impl TryFrom<RawSpace> for FiniteSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        FiniteSpace::new(raw.variables)
    }
}

impl From<FiniteSpace> for RawSpace {
    fn from(space: FiniteSpace) -> Self {
        RawSpace {
            variables: space.variables,
        }
    }
}

impl FiniteSpace {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidSpace(
                "a space needs at least one variable".into(),
            ));
        }
        let mut seen = HashSet::new();
        let mut total: usize = 1;
        for v in &variables {
            if v.card == 0 {
                return Err(Error::InvalidSpace(format!(
                    "variable '{}' has cardinality 0",
                    v.name
                )));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate variable name '{}'",
                    v.name
                )));
            }
            total = total.checked_mul(v.card).ok_or_else(|| {
                Error::InvalidSpace("total size overflows the address range".into())
            })?;
        }
        Ok(Self {
            variables,
            total_size: total,
        })
    }

    /// Convenience constructor from `(name, cardinality)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, usize)>,
    ) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, card)| Variable {
                    name: name.into(),
                    card,
                })
                .collect(),
        )
    }

    /// A single variable named `x` with `k` values.
    pub fn single(k: usize) -> Result<Self> {
        Self::from_pairs([("x", k)])
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn total_size(&self) -> usize {
        self.total_size
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.card).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn index_to_tuple(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.total_size {
            return Err(Error::Range(format!(
                "flat index {flat} outside [0, {})",
                self.total_size
            )));
        }
        let mut tuple = vec![0; self.variables.len()];
        let mut rest = flat;
        for (slot, v) in tuple.iter_mut().zip(&self.variables).rev() {
            *slot = rest % v.card;
            rest /= v.card;
        }
        Ok(tuple)
    }

    pub fn tuple_to_index(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.variables.len() {
            return Err(Error::Range(format!(
                "tuple has {} values, space has {} variables",
                tuple.len(),
                self.variables.len()
            )));
        }
        let mut flat = 0;
        for (&value, v) in tuple.iter().zip(&self.variables) {
            if value >= v.card {
                return Err(Error::Range(format!(
                    "value {value} for variable '{}' outside [0, {})",
                    v.name, v.card
                )));
            }
            flat = flat * v.card + value;
        }
        Ok(flat)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("space serialization is infallible")
    }

    /// Stable 16-hex-digit identifier derived from the canonical JSON.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
