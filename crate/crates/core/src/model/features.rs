use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteSpace;

/// How a log-linear model's sufficient statistics are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSpec {
    Named(NamedFeatures),
    /// One feature vector per outcome, in flat-index order.
    Table {
        table: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedFeatures {
    /// One indicator per outcome.
    Saturated,
    /// One indicator per (variable, value).
    SingletonMarginals,
    /// Singleton indicators plus one per (variable pair, value pair).
    Pairwise,
}

/// Dense feature matrix: `dim` features for each outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn build(space: &FiniteSpace, spec: &FeatureSpec) -> Result<Self> {
        match spec {
            FeatureSpec::Named(NamedFeatures::Saturated) => Ok(Self::saturated(space)),
            FeatureSpec::Named(NamedFeatures::SingletonMarginals) => {
                Ok(Self::indicators(space, false))
            }
            FeatureSpec::Named(NamedFeatures::Pairwise) => Ok(Self::indicators(space, true)),
            FeatureSpec::Table { table } => Self::from_table(space, table),
        }
    }

    pub fn saturated(space: &FiniteSpace) -> Self {
        let n = space.total_size();
        let mut values = vec![0.0; n * n];
        for x in 0..n {
            values[x * n + x] = 1.0;
        }
        Self { dim: n, values }
    }

    fn indicators(space: &FiniteSpace, pairs: bool) -> Self {
        let cards = space.cardinalities();
        let m = cards.len();
        let mut offsets = Vec::with_capacity(m);
        let mut dim = 0;
        for &c in &cards {
            offsets.push(dim);
            dim += c;
        }
        let mut pair_offsets = Vec::new();
        if pairs {
            for a in 0..m {
                for b in a + 1..m {
                    pair_offsets.push((a, b, dim));
                    dim += cards[a] * cards[b];
                }
            }
        }
        let n = space.total_size();
        let mut values = vec![0.0; n * dim];
        for x in 0..n {
            let t = space.index_to_tuple(x).expect("index within range");
            let row = &mut values[x * dim..(x + 1) * dim];
            for v in 0..m {
                row[offsets[v] + t[v]] = 1.0;
            }
            for &(a, b, off) in &pair_offsets {
                row[off + t[a] * cards[b] + t[b]] = 1.0;
            }
        }
        Self { dim, values }
    }

    pub fn from_table(space: &FiniteSpace, table: &[Vec<f64>]) -> Result<Self> {
        if table.len() != space.total_size() {
            return Err(Error::Shape(format!(
                "feature table has {} rows, space has {} outcomes",
                table.len(),
                space.total_size()
            )));
        }
        let dim = table.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Shape(
                "feature vectors must have at least one entry".into(),
            ));
        }
        if let Some(i) = table.iter().position(|r| r.len() != dim) {
            return Err(Error::Shape(format!(
                "feature row {i} has a different length"
            )));
        }
        if table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "feature table contains a non-finite value".into(),
            ));
        }
        Ok(Self {
            dim,
            values: table.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_outcomes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.dim..(x + 1) * self.dim]
    }

    /// `E_p[phi]`.
    pub fn expectation(&self, probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (x, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, f) in out.iter_mut().zip(self.row(x)) {
                *o += p * f;
            }
        }
        out
    }

    /// `<phi(x), theta>` for every outcome.
    pub fn scores(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n_outcomes())
            .map(|x| self.row(x).iter().zip(theta).map(|(f, t)| f * t).sum())
            .collect()
    }
}
