//! Run configuration: one JSON document describing the game and what to do
//! with it.
//!
//! ```json
//! {
//!   "mode": "simulate",
//!   "space": {"variables": [{"name": "x", "card": 2}]},
//!   "players": [
//!     {"data": {"probs": [1, 0]}, "batch_size": 512, "step_size": 0.1},
//!     {"data": {"file": "samples.txt"}}
//!   ],
//!   "alpha": [[0.5, 0.5], [0.5, 0.5]],
//!   "rounds": 500,
//!   "master_seed": 7
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::alpha::AlphaMatrix;
use crate::distribution::TabularDistribution;
use crate::engine::{
    AlphaSchedule, Decay, GameSpec, PlayerSelection, PlayerSpec, Segment, StepRule,
};
use crate::error::{Error, Result, ValidationIssue};
use crate::hetero::VariableSubset;
use crate::ingest::ingest_samples;
use crate::model::{InitSpec, Model, ModelSpec};
use crate::space::FiniteSpace;

pub const DEFAULT_SIZE_CAP: usize = 4096;
pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_INNER_STEPS: usize = 8;
pub const DEFAULT_STEP_SIZE: f64 = 0.1;
pub const DEFAULT_SWEEP_SEEDS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ExactEquilibrium,
    Simulate,
    Heterogeneous,
    AlphaSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Self-weights; the remaining mass is split evenly among peers.
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// One derived game of an alpha sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub grid_index: usize,
    pub self_weight: f64,
    pub seed: u64,
    pub spec: GameSpec,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub spec: GameSpec,
    pub sweep: Option<SweepConfig>,
    pub size_cap: usize,
    pub output_dir: Option<PathBuf>,
    /// The document as loaded, for handing to child processes.
    pub raw: Value,
    /// Directory relative paths in the document are resolved against.
    pub base_dir: PathBuf,
}

const TOP_KEYS: &[&str] = &[
    "mode",
    "space",
    "players",
    "alpha",
    "allow_zero_diagonal",
    "rounds",
    "player_selection",
    "master_seed",
    "exact_mixtures",
    "sweep",
    "size_cap",
    "output_dir",
];

const PLAYER_KEYS: &[&str] = &[
    "model",
    "data",
    "subset",
    "batch_size",
    "inner_steps",
    "step_size",
    "decay",
    "init",
];

#[derive(Deserialize)]
#[serde(untagged)]
enum DataSource {
    Probs {
        probs: Vec<f64>,
    },
    File {
        file: PathBuf,
        #[serde(default)]
        smoothing: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    from_round: u64,
    alpha: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    Matrix(Vec<Vec<f64>>),
    Schedule { schedule: Vec<RawSegment> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    grid: Vec<f64>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
}

/// Collects issues while pulling typed fields out of a JSON object.
struct Reader {
    issues: Vec<ValidationIssue>,
}

impl Reader {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue::new(path, message));
    }

    fn field<T: DeserializeOwned>(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        path: &str,
    ) -> Option<T> {
        let v = obj.get(key)?;
        match serde_json::from_value::<T>(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.issue(format!("{path}/{key}"), e.to_string());
                None
            }
        }
    }

    fn required<T: DeserializeOwned>(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        path: &str,
    ) -> Option<T> {
        if !obj.contains_key(key) {
            self.issue(format!("{path}/{key}"), "required field is missing");
            return None;
        }
        self.field(obj, key, path)
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, known: &[&str], path: &str) {
        for k in obj.keys() {
            if !known.contains(&k.as_str()) {
                self.issue(format!("{path}/{k}"), "unknown field");
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display()))
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        Error::Validation(vec![ValidationIssue::new(
            "",
            format!("not valid JSON: {e}"),
        )])
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(value, &base)
}

struct PlayerDraft {
    subset: VariableSubset,
    data: Option<TabularDistribution>,
    model: Option<Model>,
    batch_size: usize,
    inner_steps: usize,
    step: StepRule,
}

/// Validates a configuration document. Every problem found is reported, each
/// with a JSON-pointer path.
pub fn parse_config(value: Value, base_dir: &Path) -> Result<RunConfig> {
    let mut r = Reader { issues: Vec::new() };
    let Some(obj) = value.as_object() else {
        return Err(Error::Validation(vec![ValidationIssue::new(
            "",
            "configuration must be a JSON object",
        )]));
    };
    r.unknown_keys(obj, TOP_KEYS, "");
    let mode: Option<Mode> = r.required(obj, "mode", "");
    let size_cap: usize = r.field(obj, "size_cap", "").unwrap_or(DEFAULT_SIZE_CAP);
    let allow_zero: bool = r.field(obj, "allow_zero_diagonal", "").unwrap_or(false);
    let master_seed: u64 = r.field(obj, "master_seed", "").unwrap_or(0);
    let selection: PlayerSelection = r.field(obj, "player_selection", "").unwrap_or_default();
    let exact_mixtures: bool = r.field(obj, "exact_mixtures", "").unwrap_or(false);
    let output_dir: Option<PathBuf> = r.field(obj, "output_dir", "");
    let rounds: Option<u64> = match mode {
        Some(Mode::ExactEquilibrium) => r.field(obj, "rounds", ""),
        _ => r.required(obj, "rounds", ""),
    };

    let space: Option<FiniteSpace> = r.required(obj, "space", "");
    if let Some(s) = &space {
        if s.total_size() > size_cap {
            r.issue(
                "/space",
                format!(
                    "space has {} outcomes, above the size cap of {size_cap}",
                    s.total_size()
                ),
            );
        }
    }
    let space = space.filter(|s| s.total_size() <= size_cap);

    let mut drafts: Vec<Option<PlayerDraft>> = Vec::new();
    match obj.get("players") {
        None => r.issue("/players", "required field is missing"),
        Some(Value::Array(list)) => {
            if list.is_empty() {
                r.issue("/players", "at least one player is required");
            }
            for (i, p) in list.iter().enumerate() {
                drafts.push(parse_player(&mut r, p, i, space.as_ref(), mode, base_dir));
            }
        }
        Some(_) => r.issue("/players", "must be an array"),
    }
    let n = drafts.len();

    let schedule = match (mode, obj.get("alpha")) {
        (Some(Mode::AlphaSweep), None) => None,
        (_, None) => {
            r.issue("/alpha", "required field is missing");
            None
        }
        (_, Some(_)) => parse_alpha(&mut r, obj, n, allow_zero),
    };

    let sweep = match mode {
        Some(Mode::AlphaSweep) => {
            let raw: Option<RawSweep> = r.required(obj, "sweep", "");
            raw.map(|s| {
                if s.grid.is_empty() {
                    r.issue("/sweep/grid", "grid must not be empty");
                }
                for (k, &a) in s.grid.iter().enumerate() {
                    if !(a > 0.0 && a <= 1.0) {
                        r.issue(format!("/sweep/grid/{k}"), format!("{a} is outside (0, 1]"));
                    } else if n == 1 && a < 1.0 {
                        r.issue(
                            format!("/sweep/grid/{k}"),
                            "a single player can only have self-weight 1",
                        );
                    }
                }
                if s.seeds.as_ref().is_some_and(Vec::is_empty) {
                    r.issue("/sweep/seeds", "seeds must not be empty");
                }
                for (i, d) in drafts.iter().enumerate() {
                    if d.as_ref().is_some_and(|d| d.data.is_none()) {
                        r.issue(
                            format!("/players/{i}/data"),
                            "every player needs data in an alpha sweep",
                        );
                    }
                }
                SweepConfig {
                    grid: s.grid,
                    seeds: s.seeds.unwrap_or_else(|| {
                        (0..DEFAULT_SWEEP_SEEDS)
                            .map(|k| master_seed.wrapping_add(k))
                            .collect()
                    }),
                }
            })
        }
        _ => {
            if obj.contains_key("sweep") {
                r.issue("/sweep", "only used in alpha-sweep mode");
            }
            None
        }
    };

    if !r.issues.is_empty() {
        return Err(Error::Validation(r.issues));
    }
    let (Some(mode), Some(space)) = (mode, space) else {
        unreachable!("missing fields are reported as issues")
    };
    let players: Vec<PlayerSpec> = drafts
        .into_iter()
        .map(|d| {
            let d = d.expect("player issues are reported");
            PlayerSpec {
                model: d.model.expect("model issues are reported"),
                subset: d.subset,
                data: d.data,
                batch_size: d.batch_size,
                inner_steps: d.inner_steps,
                step: d.step,
            }
        })
        .collect();
    let schedule = match schedule {
        Some(s) => s,
        // alpha sweeps derive their matrices from the grid
        None => AlphaSchedule::constant(sweep_alpha(n, 1.0)?),
    };
    let mut spec = GameSpec::new(space, players, schedule);
    spec.rounds = rounds.unwrap_or(0);
    spec.selection = selection;
    spec.master_seed = master_seed;
    spec.exact_mixtures = exact_mixtures;
    let config = RunConfig {
        mode,
        spec,
        sweep,
        size_cap,
        output_dir,
        raw: value,
        base_dir: base_dir.to_path_buf(),
    };
    config.validate_games()?;
    Ok(config)
}

fn parse_player(
    r: &mut Reader,
    value: &Value,
    i: usize,
    space: Option<&FiniteSpace>,
    mode: Option<Mode>,
    base_dir: &Path,
) -> Option<PlayerDraft> {
    let path = format!("/players/{i}");
    let Some(obj) = value.as_object() else {
        r.issue(path, "player must be an object");
        return None;
    };
    r.unknown_keys(obj, PLAYER_KEYS, &path);
    let model_spec: ModelSpec = r.field(obj, "model", &path).unwrap_or_default();
    let init: InitSpec = r.field(obj, "init", &path).unwrap_or_default();
    let batch_size = r
        .field(obj, "batch_size", &path)
        .unwrap_or(DEFAULT_BATCH_SIZE);
    let inner_steps = r
        .field(obj, "inner_steps", &path)
        .unwrap_or(DEFAULT_INNER_STEPS);
    let size: f64 = r
        .field(obj, "step_size", &path)
        .unwrap_or(DEFAULT_STEP_SIZE);
    let decay: Decay = r.field(obj, "decay", &path).unwrap_or_default();
    if batch_size == 0 {
        r.issue(format!("{path}/batch_size"), "must be at least 1");
    }
    if inner_steps == 0 {
        r.issue(format!("{path}/inner_steps"), "must be at least 1");
    }
    if !(size > 0.0 && size.is_finite()) {
        r.issue(format!("{path}/step_size"), "must be positive and finite");
    }
    let members: Option<Vec<String>> = r.field(obj, "subset", &path);
    let space = space?;
    let subset = match members {
        None => VariableSubset::full(space),
        Some(m) => match VariableSubset::new(space, &m) {
            Ok(s) => {
                if !s.is_full() && mode.is_some_and(|m| m != Mode::Heterogeneous) {
                    r.issue(
                        format!("{path}/subset"),
                        "variable subsets need heterogeneous mode",
                    );
                }
                s
            }
            Err(e) => {
                r.issue(format!("{path}/subset"), e.to_string());
                return None;
            }
        },
    };
    let own = subset.space().clone();
    let data = match obj.get("data") {
        None | Some(Value::Null) => None,
        Some(v) => match serde_json::from_value::<DataSource>(v.clone()) {
            Err(_) => {
                r.issue(
                    format!("{path}/data"),
                    "expected {\"probs\": [...]}, {\"file\": \"...\"} or null",
                );
                None
            }
            Ok(DataSource::Probs { probs }) => {
                if probs.len() != own.total_size() {
                    r.issue(
                        format!("{path}/data/probs"),
                        format!(
                            "has {} entries, the player's space has {}",
                            probs.len(),
                            own.total_size()
                        ),
                    );
                    None
                } else {
                    TabularDistribution::from_weights(own.clone(), probs)
                        .map_err(|e| r.issue(format!("{path}/data/probs"), e.to_string()))
                        .ok()
                }
            }
            Ok(DataSource::File { file, smoothing }) => {
                let file = if file.is_absolute() {
                    file
                } else {
                    base_dir.join(file)
                };
                ingest_samples(&file, &own, smoothing)
                    .map_err(|e| r.issue(format!("{path}/data/file"), e.to_string()))
                    .ok()
            }
        },
    };
    let model = match Model::build(&own, &model_spec, &init) {
        Ok(m) => Some(m),
        Err(e) => {
            r.issue(format!("{path}/model"), e.to_string());
            None
        }
    };
    Some(PlayerDraft {
        subset,
        data,
        model,
        batch_size,
        inner_steps,
        step: StepRule { size, decay },
    })
}

fn check_matrix(
    r: &mut Reader,
    rows: Vec<Vec<f64>>,
    n: usize,
    allow_zero: bool,
    path: &str,
) -> Option<AlphaMatrix> {
    let before = r.issues.len();
    if rows.len() != n {
        r.issue(
            path,
            format!(
                "alpha has {} rows but {n} players are configured",
                rows.len()
            ),
        );
    }
    for (row, msg) in AlphaMatrix::check_rows(&rows, allow_zero) {
        match row {
            Some(i) => r.issue(format!("{path}/{i}"), msg),
            None => r.issue(path, msg),
        }
    }
    if r.issues.len() > before {
        return None;
    }
    AlphaMatrix::with_options(rows, allow_zero)
        .map_err(|e| r.issue(path, e.to_string()))
        .ok()
}

fn parse_alpha(
    r: &mut Reader,
    obj: &Map<String, Value>,
    n: usize,
    allow_zero: bool,
) -> Option<AlphaSchedule> {
    let raw: RawAlpha = match serde_json::from_value(obj["alpha"].clone()) {
        Ok(a) => a,
        Err(_) => {
            r.issue(
                "/alpha",
                "expected a square matrix or {\"schedule\": [{\"from_round\", \"alpha\"}]}",
            );
            return None;
        }
    };
    match raw {
        RawAlpha::Matrix(rows) => {
            check_matrix(r, rows, n, allow_zero, "/alpha").map(AlphaSchedule::constant)
        }
        RawAlpha::Schedule { schedule } => {
            let mut segments = Vec::new();
            let mut ok = true;
            for (k, seg) in schedule.into_iter().enumerate() {
                match check_matrix(
                    r,
                    seg.alpha,
                    n,
                    allow_zero,
                    &format!("/alpha/schedule/{k}/alpha"),
                ) {
                    Some(alpha) => segments.push(Segment {
                        from_round: seg.from_round,
                        alpha,
                    }),
                    None => ok = false,
                }
            }
            if !ok {
                return None;
            }
            AlphaSchedule::new(segments)
                .map_err(|e| r.issue("/alpha/schedule", e.to_string()))
                .ok()
        }
    }
}

/// Symmetric coupling with self-weight `a` and the rest split evenly.
pub fn sweep_alpha(n: usize, a: f64) -> Result<AlphaMatrix> {
    if n == 1 {
        return AlphaMatrix::new(vec![vec![a]]);
    }
    let off = (1.0 - a) / (n - 1) as f64;
    let rows = (0..n)
        .map(|i| (0..n).map(|j| if i == j { a } else { off }).collect())
        .collect();
    AlphaMatrix::new(rows)
}

impl RunConfig {
    /// Overrides the master seed; sweeps without explicit seeds follow it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let old = self.spec.master_seed;
        self.spec.master_seed = seed;
        if let Some(s) = self.sweep.as_mut() {
            let derived: Vec<u64> = (0..s.seeds.len() as u64)
                .map(|k| old.wrapping_add(k))
                .collect();
            if s.seeds == derived {
                s.seeds = (0..s.seeds.len() as u64)
                    .map(|k| seed.wrapping_add(k))
                    .collect();
            }
        }
        self
    }

    /// The games of an alpha sweep, grid-major.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Schema("configuration has no sweep".into()))?;
        let n = self.spec.n_players();
        let mut points = Vec::new();
        for (k, &a) in sweep.grid.iter().enumerate() {
            for &seed in &sweep.seeds {
                points.push(self.sweep_point(k, a, seed, n)?);
            }
        }
        Ok(points)
    }

    fn sweep_point(&self, grid_index: usize, a: f64, seed: u64, n: usize) -> Result<SweepPoint> {
        let mut spec = self.spec.clone();
        spec.alpha = AlphaSchedule::constant(sweep_alpha(n, a)?);
        spec.master_seed = seed;
        Ok(SweepPoint {
            grid_index,
            self_weight: a,
            seed,
            spec,
        })
    }

    /// The game a child process should host: the main spec, or one sweep
    /// point identified by its self-weight and seed.
    pub fn game_for(&self, seed: u64, self_weight: Option<f64>) -> Result<GameSpec> {
        match self_weight {
            None => {
                let mut spec = self.spec.clone();
                spec.master_seed = seed;
                Ok(spec)
            }
            Some(a) => Ok(self.sweep_point(0, a, seed, self.spec.n_players())?.spec),
        }
    }

    fn validate_games(&self) -> Result<()> {
        let mut issues = match self.mode {
            Mode::AlphaSweep => {
                let mut all = Vec::new();
                for p in self.sweep_points()? {
                    for i in p.spec.issues() {
                        if !all.contains(&i) {
                            all.push(i);
                        }
                    }
                }
                all
            }
            _ => self.spec.issues(),
        };
        if self.mode == Mode::ExactEquilibrium {
            issues.retain(|i| i.path.starts_with("/alpha") || i.path.ends_with("/data"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}
