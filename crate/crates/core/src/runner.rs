//! Executes a validated configuration and writes its artifacts.
//!
//! | mode                | files                                              |
//! |---------------------|----------------------------------------------------|
//! | `exact-equilibrium` | `summary.json`                                     |
//! | `simulate`          | `history.csv`, `summary.json`                      |
//! | `heterogeneous`     | `history.csv`, `overlap.csv`, `summary.json`       |
//! | `alpha-sweep`       | `sweep.csv`, `sweep_runs.csv`, `runs/*/history.csv`, `summary.json` |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig, SweepPoint};
use crate::distribution::{kl_divergence, l1_distance, TabularDistribution};
use crate::engine::{drive, Backend, CsvSink, GameOutcome, GameSpec, LocalBackend, TransportKind};
use crate::equilibrium::{iterate, solve_exact, spectral_radius_bound};
use crate::error::{Error, Result};
use crate::node::{Launch, ProcessBackend};

pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// One child process per player, talking over TCP.
    pub multiprocess: bool,
    pub parallel_sweep: bool,
    /// Node executable and port range for multi-process runs; defaults to
    /// the current executable.
    pub launch: Option<Launch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn output_dir(config: &RunConfig, opts: &RunOptions) -> PathBuf {
    match (&opts.out_dir, &config.output_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => config.base_dir.join(d),
        (None, None) => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Closed-form equilibrium for every alpha segment, with an iterative
/// cross-check.
pub fn solve(config: &RunConfig) -> Result<Value> {
    let spec = &config.spec;
    let pi: Vec<TabularDistribution> = spec
        .players
        .iter()
        .map(|p| {
            p.data
                .clone()
                .unwrap_or_else(|| TabularDistribution::uniform(p.subset.space().clone()))
        })
        .collect();
    let mut segments = Vec::new();
    for seg in spec.alpha.segments() {
        let exact = solve_exact(&pi, &seg.alpha)?;
        let check = iterate(&pi, &seg.alpha, None, 100_000, 1e-13)?;
        let gap = exact
            .distributions
            .iter()
            .zip(&check.distributions)
            .map(|(a, b)| l1_distance(a.probs(), b.probs()))
            .fold(0.0, f64::max);
        segments.push(json!({
            "from_round": seg.from_round,
            "alpha": seg.alpha,
            "spectral_radius_bound": spectral_radius_bound(&seg.alpha),
            "equilibrium": exact,
            "iterative_check": {
                "iterations_used": check.iterations_used,
                "converged": check.converged,
                "max_l1_to_exact": gap,
            },
        }));
    }
    Ok(json!({
        "mode": Mode::ExactEquilibrium,
        "players": spec.n_players(),
        "space": spec.space,
        "segments": segments,
    }))
}

fn make_backend(
    config: &RunConfig,
    spec: &GameSpec,
    self_weight: Option<f64>,
    opts: &RunOptions,
) -> Result<Box<dyn Backend>> {
    if opts.multiprocess {
        let launch = match &opts.launch {
            Some(l) => l.clone(),
            None => Launch::current()?,
        };
        Ok(Box::new(ProcessBackend::launch(
            &launch,
            &config.raw,
            &config.base_dir,
            spec,
            self_weight,
        )?))
    } else {
        Ok(Box::new(LocalBackend::new(spec, TransportKind::InProcess)?))
    }
}

/// Plays one game, streaming its history (and overlap rows when
/// `track_overlap`) into `dir`.
fn play_to_dir(
    config: &RunConfig,
    spec: &GameSpec,
    self_weight: Option<f64>,
    opts: &RunOptions,
    dir: &Path,
    track_overlap: bool,
) -> Result<(GameOutcome, Vec<PathBuf>)> {
    fs::create_dir_all(dir)?;
    let history_path = dir.join("history.csv");
    let overlap_path = dir.join("overlap.csv");
    let history = BufWriter::new(File::create(&history_path)?);
    let overlap = if track_overlap {
        Some(BufWriter::new(File::create(&overlap_path)?))
    } else {
        None
    };
    let mut sink = CsvSink::new(history, overlap)?;
    let mut backend = make_backend(config, spec, self_weight, opts)?;
    let outcome = drive(spec, backend.as_mut(), &mut sink, track_overlap)?;
    sink.finish()?;
    let mut files = vec![history_path];
    if track_overlap {
        files.push(overlap_path);
    }
    Ok((outcome, files))
}

fn game_summary(config: &RunConfig, spec: &GameSpec, outcome: &GameOutcome) -> Value {
    let final_rows: Vec<Value> = (0..spec.n_players())
        .map(|i| {
            let row = outcome
                .history
                .last_row(i)
                .expect("every player has an initial row");
            json!({
                "player": i,
                "kl_to_eq": row.kl_to_eq,
                "l1_to_eq": row.l1_to_eq,
                "own_loglik": row.own_loglik,
                "utility": row.utility,
                "distribution": outcome.final_distributions[i].probs(),
            })
        })
        .collect();
    let references: Vec<Value> = spec
        .alpha
        .segments()
        .iter()
        .zip(&outcome.references)
        .map(|(seg, refs)| {
            json!({
                "from_round": seg.from_round,
                "alpha": seg.alpha,
                "distributions": refs.iter().map(TabularDistribution::probs).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "mode": config.mode,
        "master_seed": spec.master_seed,
        "rounds": spec.rounds,
        "players": spec.n_players(),
        "player_selection": spec.selection,
        "equilibrium_reference": references,
        "final": final_rows,
        "messages": outcome.history.messages,
        "completion_fallbacks": outcome.history.completion_fallbacks,
    })
}

/// Per-player distances of a finished game to the data sources, in nats:
/// own target, uniform mixture of the other targets, uniform mixture of all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepMetrics {
    pub kl_to_own: f64,
    pub kl_to_other: f64,
    pub kl_to_pooled: f64,
}

pub fn sweep_metrics(spec: &GameSpec, finals: &[TabularDistribution]) -> Result<Vec<SweepMetrics>> {
    let pi: Vec<&TabularDistribution> = spec
        .players
        .iter()
        .map(|p| {
            p.data
                .as_ref()
                .ok_or_else(|| Error::Schema("sweep metrics need every player's data".into()))
        })
        .collect::<Result<_>>()?;
    let n = pi.len();
    let pooled = TabularDistribution::mixture(&pi, &vec![1.0 / n as f64; n])?;
    (0..n)
        .map(|i| {
            let learned = finals[i].probs();
            let others: Vec<&TabularDistribution> =
                (0..n).filter(|&j| j != i).map(|j| pi[j]).collect();
            let kl_to_other = if others.is_empty() {
                f64::NAN
            } else {
                let w = vec![1.0 / others.len() as f64; others.len()];
                kl_divergence(TabularDistribution::mixture(&others, &w)?.probs(), learned)
            };
            Ok(SweepMetrics {
                kl_to_own: kl_divergence(pi[i].probs(), learned),
                kl_to_other,
                kl_to_pooled: kl_divergence(pooled.probs(), learned),
            })
        })
        .collect()
}

/// Median with infinities ordered last; NaN when any value is NaN.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 || v[m - 1] == v[m] {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub const SWEEP_HEADER: &str = "alpha,player,kl_to_own,kl_to_other,kl_to_pooled";
pub const SWEEP_RUNS_HEADER: &str = "alpha,seed,player,kl_to_own,kl_to_other,kl_to_pooled";

fn run_sweep(config: &RunConfig, opts: &RunOptions, out: &Path) -> Result<(Value, Vec<PathBuf>)> {
    let points = config.sweep_points()?;
    let runs_dir = out.join("runs");
    let play = |p: &SweepPoint| -> Result<(Vec<SweepMetrics>, PathBuf)> {
        let dir = runs_dir.join(format!("alpha-{}-seed-{}", p.grid_index, p.seed));
        let (outcome, _) = play_to_dir(config, &p.spec, Some(p.self_weight), opts, &dir, false)?;
        Ok((
            sweep_metrics(&p.spec, &outcome.final_distributions)?,
            dir.join("history.csv"),
        ))
    };
    let results: Vec<(Vec<SweepMetrics>, PathBuf)> = if opts.parallel_sweep && !opts.multiprocess {
        points.par_iter().map(play).collect::<Result<_>>()?
    } else {
        points.iter().map(play).collect::<Result<_>>()?
    };

    let sweep = config.sweep.as_ref().expect("sweep mode has a sweep");
    let n = config.spec.n_players();
    let mut runs_csv = format!("{SWEEP_RUNS_HEADER}\n");
    for (p, (metrics, _)) in points.iter().zip(&results) {
        for (i, m) in metrics.iter().enumerate() {
            runs_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.self_weight, p.seed, i, m.kl_to_own, m.kl_to_other, m.kl_to_pooled
            ));
        }
    }
    let mut sweep_csv = format!("{SWEEP_HEADER}\n");
    let mut medians = Vec::new();
    for (k, &a) in sweep.grid.iter().enumerate() {
        let at: Vec<&Vec<SweepMetrics>> = points
            .iter()
            .zip(&results)
            .filter(|(p, _)| p.grid_index == k)
            .map(|(_, (m, _))| m)
            .collect();
        for i in 0..n {
            let pick = |f: fn(&SweepMetrics) -> f64| {
                median(&at.iter().map(|m| f(&m[i])).collect::<Vec<_>>())
            };
            let row = SweepMetrics {
                kl_to_own: pick(|m| m.kl_to_own),
                kl_to_other: pick(|m| m.kl_to_other),
                kl_to_pooled: pick(|m| m.kl_to_pooled),
            };
            sweep_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                a, i, row.kl_to_own, row.kl_to_other, row.kl_to_pooled
            ));
            medians.push(json!({"alpha": a, "player": i, "median": row}));
        }
    }
    let sweep_path = out.join("sweep.csv");
    let runs_path = out.join("sweep_runs.csv");
    fs::write(&sweep_path, sweep_csv)?;
    fs::write(&runs_path, runs_csv)?;
    let summary = json!({
        "mode": Mode::AlphaSweep,
        "grid": sweep.grid,
        "seeds": sweep.seeds,
        "rounds": config.spec.rounds,
        "players": n,
        "medians": medians,
    });
    let mut files = vec![sweep_path, runs_path];
    files.extend(results.into_iter().map(|(_, h)| h));
    Ok((summary, files))
}

/// Runs `config` and writes its artifacts.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let config = match opts.seed {
        Some(s) => config.clone().with_seed(s),
        None => config.clone(),
    };
    let out = output_dir(&config, opts);
    fs::create_dir_all(&out)?;
    let (summary, mut files) = match config.mode {
        Mode::ExactEquilibrium => (solve(&config)?, Vec::new()),
        Mode::Simulate | Mode::Heterogeneous => {
            let hetero = config.mode == Mode::Heterogeneous;
            let (outcome, files) = play_to_dir(&config, &config.spec, None, opts, &out, hetero)?;
            (game_summary(&config, &config.spec, &outcome), files)
        }
        Mode::AlphaSweep => run_sweep(&config, opts, &out)?,
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    files.push(summary_path);
    log::info!("wrote {} file(s) to {}", files.len(), out.display());
    Ok(RunReport {
        mode: config.mode,
        out_dir: out,
        files,
    })
}

/// Machine-readable error document for the CLI.
pub fn error_json(e: &Error) -> Value {
    let issues = match e.root() {
        Error::Validation(issues) => serde_json::to_value(issues).unwrap_or(Value::Null),
        _ => Value::Null,
    };
    let mut err = json!({
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    if !issues.is_null() {
        err["issues"] = issues;
    }
    if let Error::Round { round, player, .. } = e {
        err["round"] = json!(round);
        err["player"] = json!(player);
    }
    json!({ "error": err })
}

/// Writes `text` to `w` followed by a newline.
pub fn emit(mut w: impl Write, value: &Value) -> std::io::Result<()> {
    writeln!(
        w,
        "{}",
        serde_json::to_string(value).map_err(std::io::Error::other)?
    )
}
