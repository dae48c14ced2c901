//! Nash equilibrium of the distribution-level game.
//!
//! At equilibrium every player's distribution equals the mixture it is
//! trained on: `p_i = a_ii * pi_i + sum_{j != i} a_ij * p_j`. Writing the
//! players as a column, `p = A pi + B p`, so `p = (I - B)^{-1} A pi`. The
//! mixture matrix stores `M[k][i]`, the weight of `pi_k` inside `p_i`.

use serde::Serialize;

use crate::alpha::AlphaMatrix;
use crate::distribution::{l1_distance, TabularDistribution};
use crate::error::{Error, Result};

/// Pivots smaller than this are treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Iterative,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    #[serde(serialize_with = "ser_dists")]
    pub distributions: Vec<TabularDistribution>,
    pub mixture_matrix: Vec<Vec<f64>>,
    pub method: Method,
    pub iterations_used: usize,
    pub residual: f64,
    pub converged: bool,
    /// Per-step `max_i L1(p_i^(t+1), p_i^(t))`, iterative solves only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<f64>,
}

fn ser_dists<S: serde::Serializer>(
    dists: &[TabularDistribution],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(dists.iter().map(TabularDistribution::probs))
}

fn check_inputs(pi: &[TabularDistribution], alpha: &AlphaMatrix) -> Result<()> {
    let first = pi
        .first()
        .ok_or_else(|| Error::Shape("at least one player is required".into()))?;
    if alpha.n_players() != pi.len() {
        return Err(Error::Shape(format!(
            "alpha is {0}x{0} but {1} target distributions were given",
            alpha.n_players(),
            pi.len()
        )));
    }
    if let Some(i) = pi.iter().position(|p| p.space() != first.space()) {
        return Err(Error::Shape(format!(
            "target of player {i} lives on a different space"
        )));
    }
    Ok(())
}

/// Players that cannot reach any player with positive self-weight through
/// positive off-diagonal couplings. These make `I - B` singular.
fn closed_zero_diagonal_players(alpha: &AlphaMatrix) -> Vec<usize> {
    let n = alpha.n_players();
    let mut grounded: Vec<bool> = (0..n).map(|i| alpha.get(i, i) > 0.0).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !grounded[i] && (0..n).any(|j| grounded[j] && alpha.get(i, j) > 0.0) {
                grounded[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| !grounded[i]).collect()
}

/// Solves `lhs * X = rhs` in place by Gaussian elimination with partial
/// pivoting. Returns `None` if a pivot falls below [`PIVOT_THRESHOLD`].
fn solve_in_place(mut lhs: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = lhs.len();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&a, &b| {
            lhs[a][col]
                .abs()
                .partial_cmp(&lhs[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if lhs[pivot_row][col].abs() < PIVOT_THRESHOLD {
            return None;
        }
        lhs.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = lhs[r][col] / lhs[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                lhs[r][c] -= factor * lhs[col][c];
            }
            for c in 0..rhs[r].len() {
                rhs[r][c] -= factor * rhs[col][c];
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..rhs[col].len() {
            let mut v = rhs[col][c];
            for k in col + 1..n {
                v -= lhs[col][k] * rhs[k][c];
            }
            rhs[col][c] = v / lhs[col][col];
        }
    }
    Some(rhs)
}

fn combine(pi: &[TabularDistribution], mixture: &[Vec<f64>]) -> Result<Vec<TabularDistribution>> {
    let refs: Vec<&TabularDistribution> = pi.iter().collect();
    (0..pi.len())
        .map(|i| {
            let weights: Vec<f64> = (0..pi.len()).map(|k| mixture[k][i].max(0.0)).collect();
            TabularDistribution::mixture(&refs, &weights)
        })
        .collect()
}

/// Right-hand side of the best-response condition for player `i`.
fn best_response(
    i: usize,
    p: &[TabularDistribution],
    pi: &[TabularDistribution],
    alpha: &AlphaMatrix,
) -> Vec<f64> {
    let n = pi.len();
    let mut out: Vec<f64> = pi[i].probs().iter().map(|v| alpha.get(i, i) * v).collect();
    for j in (0..n).filter(|&j| j != i) {
        let w = alpha.get(i, j);
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(p[j].probs()) {
            *o += w * v;
        }
    }
    out
}

/// Maximum over players of the L1 gap between `p_i` and its best response.
pub fn best_response_residual(
    p: &[TabularDistribution],
    pi: &[TabularDistribution],
    alpha: &AlphaMatrix,
) -> f64 {
    (0..pi.len())
        .map(|i| l1_distance(p[i].probs(), &best_response(i, p, pi, alpha)))
        .fold(0.0, f64::max)
}

/// Gershgorin bound on the spectral radius of the off-diagonal part.
pub fn spectral_radius_bound(alpha: &AlphaMatrix) -> f64 {
    alpha
        .diagonal()
        .into_iter()
        .map(|d| 1.0 - d)
        .fold(0.0, f64::max)
}

pub fn solve_exact(pi: &[TabularDistribution], alpha: &AlphaMatrix) -> Result<EquilibriumResult> {
    check_inputs(pi, alpha)?;
    let n = pi.len();
    let (a, b) = alpha.split();
    let closed = closed_zero_diagonal_players(alpha);
    if !closed.is_empty() {
        return Err(Error::Singular { players: closed });
    }
    let lhs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - b[i][j])
                .collect()
        })
        .collect();
    // X = (I - B)^{-1} A, so p_i = sum_k X[i][k] pi_k and M = X^T.
    let x = solve_in_place(lhs, a).ok_or_else(|| Error::Singular {
        players: (0..n).filter(|&i| alpha.get(i, i) == 0.0).collect(),
    })?;
    let mixture: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| x[i][k]).collect()).collect();
    let distributions = combine(pi, &mixture)?;
    let residual = best_response_residual(&distributions, pi, alpha);
    Ok(EquilibriumResult {
        distributions,
        mixture_matrix: mixture,
        method: Method::Exact,
        iterations_used: 0,
        residual,
        converged: true,
        trajectory: Vec::new(),
    })
}

/// Fixed-point iteration `p^(t+1)_i = a_ii pi_i + sum_{j != i} a_ij p^(t)_j`.
///
/// Stops once the largest per-player L1 change drops below `tol`. Running out
/// of steps is reported through `converged = false`.
pub fn iterate(
    pi: &[TabularDistribution],
    alpha: &AlphaMatrix,
    p0: Option<&[TabularDistribution]>,
    max_steps: usize,
    tol: f64,
) -> Result<EquilibriumResult> {
    iterate_with(pi, alpha, p0, max_steps, tol, |_, _| {})
}

/// [`iterate`] with a callback invoked on every iterate, starting with `p0`
/// at step 0.
pub fn iterate_with(
    pi: &[TabularDistribution],
    alpha: &AlphaMatrix,
    p0: Option<&[TabularDistribution]>,
    max_steps: usize,
    tol: f64,
    mut observe: impl FnMut(usize, &[TabularDistribution]),
) -> Result<EquilibriumResult> {
    check_inputs(pi, alpha)?;
    let n = pi.len();
    let mut p: Vec<TabularDistribution> = match p0 {
        Some(p0) => {
            if p0.len() != n || p0.iter().any(|d| d.space() != pi[0].space()) {
                return Err(Error::Shape(
                    "initial profile does not match the targets".into(),
                ));
            }
            p0.to_vec()
        }
        None => pi.to_vec(),
    };
    observe(0, &p);
    // Track the mixture weights alongside the distributions.
    let mut mixture: Vec<Vec<f64>> = match p0 {
        Some(_) => vec![vec![f64::NAN; n]; n],
        None => (0..n)
            .map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
            .collect(),
    };
    let mut trajectory = Vec::new();
    let mut converged = false;
    let space = pi[0].space().clone();
    for step in 1..=max_steps {
        let next: Vec<TabularDistribution> = (0..n)
            .map(|i| {
                TabularDistribution::from_parts_unchecked(
                    space.clone(),
                    best_response(i, &p, pi, alpha),
                )
            })
            .collect();
        let mut next_mix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let mut w = if k == i { alpha.get(i, i) } else { 0.0 };
                for j in (0..n).filter(|&j| j != i) {
                    w += alpha.get(i, j) * mixture[k][j];
                }
                next_mix[k][i] = w;
            }
        }
        let change = (0..n)
            .map(|i| l1_distance(next[i].probs(), p[i].probs()))
            .fold(0.0, f64::max);
        trajectory.push(change);
        p = next;
        mixture = next_mix;
        observe(step, &p);
        if change < tol {
            converged = true;
            break;
        }
    }
    let residual = best_response_residual(&p, pi, alpha);
    Ok(EquilibriumResult {
        iterations_used: trajectory.len(),
        distributions: p,
        mixture_matrix: mixture,
        method: Method::Iterative,
        residual,
        converged,
        trajectory,
    })
}
