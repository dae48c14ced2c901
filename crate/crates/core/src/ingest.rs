//! Empirical target distributions from sample files.

use std::fs;
use std::path::Path;

use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::space::FiniteSpace;

/// Reads newline-delimited outcomes and returns their empirical
/// distribution with `smoothing` added to every count.
///
/// A line holds either one flat index or one value per variable, separated
/// by commas or whitespace. Blank lines and lines starting with `#` are
/// skipped.
pub fn ingest_samples(
    path: &Path,
    space: &FiniteSpace,
    smoothing: f64,
) -> Result<TabularDistribution> {
    let text = fs::read_to_string(path)?;
    let counts = parse_samples(&text, space).map_err(|e| match e {
        Error::Range(m) => Error::Range(format!("{}: {m}", path.display())),
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        e => e,
    })?;
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::InvalidDistribution(format!(
            "{} contains no samples",
            path.display()
        )));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::Range(format!(
            "smoothing {smoothing} must be nonnegative"
        )));
    }
    TabularDistribution::from_weights(
        space.clone(),
        counts.into_iter().map(|c| c + smoothing).collect(),
    )
}

fn parse_samples(text: &str, space: &FiniteSpace) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; space.total_size()];
    let arity = space.variables().len();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let values: Vec<usize> = fields
            .iter()
            .map(|f| {
                f.parse::<usize>().map_err(|_| {
                    Error::Schema(format!("line {lineno}: '{f}' is not a nonnegative integer"))
                })
            })
            .collect::<Result<_>>()?;
        let flat = match values.len() {
            1 => values[0],
            k if k == arity => space
                .tuple_to_index(&values)
                .map_err(|e| Error::Range(format!("line {lineno}: {e}")))?,
            k => {
                return Err(Error::Schema(format!(
                    "line {lineno}: expected 1 or {arity} values, found {k}"
                )))
            }
        };
        if flat >= counts.len() {
            return Err(Error::Range(format!(
                "line {lineno}: outcome {flat} outside a space of {} outcomes",
                counts.len()
            )));
        }
        counts[flat] += 1.0;
    }
    Ok(counts)
}
