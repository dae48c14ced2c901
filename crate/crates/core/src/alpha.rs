use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Row-stochastic coupling matrix: `alpha[i][j]` is the share of player `i`'s
/// training batch drawn from source `j` (own data when `i == j`).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    rows: Vec<Vec<f64>>,
    allow_zero_diagonal: bool,
}

impl Serialize for AlphaMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AlphaMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        AlphaMatrix::new(rows).map_err(serde::de::Error::custom)
    }
}

impl AlphaMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_options(rows, false)
    }

    pub fn with_options(rows: Vec<Vec<f64>>, allow_zero_diagonal: bool) -> Result<Self> {
        let issues = Self::check(&rows, allow_zero_diagonal);
        if let Some(first) = issues.into_iter().next() {
            return Err(Error::InvalidAlpha(first));
        }
        Ok(Self {
            rows,
            allow_zero_diagonal,
        })
    }

    /// Every invariant violation, one message per offending row.
    pub fn check(rows: &[Vec<f64>], allow_zero_diagonal: bool) -> Vec<String> {
        Self::check_rows(rows, allow_zero_diagonal)
            .into_iter()
            .map(|(_, m)| m)
            .collect()
    }

    /// Like [`AlphaMatrix::check`], with the offending row index when the
    /// issue concerns a single row.
    pub fn check_rows(
        rows: &[Vec<f64>],
        allow_zero_diagonal: bool,
    ) -> Vec<(Option<usize>, String)> {
        let n = rows.len();
        let mut issues = Vec::new();
        if n == 0 {
            issues.push((None, "matrix has no rows".to_string()));
            return issues;
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                issues.push((
                    Some(i),
                    format!("row {i} has {} entries, expected {n}", row.len()),
                ));
                continue;
            }
            if let Some((j, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
            {
                issues.push((
                    Some(i),
                    format!("row {i}, column {j}: entry {v} outside [0, 1]"),
                ));
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                issues.push((Some(i), format!("row {i} sums to {sum}, expected 1")));
                continue;
            }
            if !allow_zero_diagonal && row[i] <= 0.0 {
                issues.push((
                    Some(i),
                    format!("row {i}: diagonal entry must be strictly positive unless zero diagonals are allowed"),
                ));
            }
        }
        issues
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            rows,
            allow_zero_diagonal: false,
        }
    }

    /// Diagonal `self_weight`, remaining mass split evenly among peers.
    pub fn symmetric(n: usize, self_weight: f64) -> Result<Self> {
        if n == 1 {
            return Ok(Self::identity(1));
        }
        let off = (1.0 - self_weight) / (n - 1) as f64;
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { self_weight } else { off })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn n_players(&self) -> usize {
        self.rows.len()
    }

    pub fn allow_zero_diagonal(&self) -> bool {
        self.allow_zero_diagonal
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_players()).map(|i| self.rows[i][i]).collect()
    }

    /// Splits into the diagonal part `A` and the zero-diagonal part `B`.
    pub fn split(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n_players();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = self.rows.clone();
        for i in 0..n {
            a[i][i] = self.rows[i][i];
            b[i][i] = 0.0;
        }
        (a, b)
    }
}
