//! The cooperative learning loop.
//!
//! Each round one player (or, with [`PlayerSelection::Simultaneous`], every
//! player) pulls synthetic batches from its peers, mixes them with its own
//! data in `alpha` proportions and takes a few fitting steps. Metrics are
//! recorded after every round against the closed-form equilibrium of the
//! `alpha` segment in force.

mod history;
mod mixing;
mod round;
mod schedule;
mod seeds;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use history::{CsvSink, HistoryRow, HistorySink, OverlapRow, RunHistory};
pub use mixing::{allocate, mix_batch, MixedBatch};
pub use round::{
    player_round, Decay, PeerSource, PlayerState, RoundContext, RoundOutcome, StepRule,
};
pub use schedule::{AlphaSchedule, Segment};
pub use seeds::{derive_seed, own_data_seed, peer_seed_tag, selection_seed};

use crate::alpha::AlphaMatrix;
use crate::distribution::{cross_term, kl_divergence, l1_distance, TabularDistribution};
use crate::equilibrium::solve_exact;
use crate::error::{Error, Result, ValidationIssue};
use crate::hetero::{marginalize, projection, VariableSubset};
use crate::model::{GenerativeModel, Model};
use crate::space::FiniteSpace;
use crate::transport::{
    InProcessTransport, ModelHandle, NodeServer, PeerTransport, Responder, Schema, SocketTransport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlayerSelection {
    #[default]
    RoundRobin,
    UniformRandom,
    /// Every player updates each round from the same snapshot of its peers.
    Simultaneous,
}

/// Static description of one player.
#[derive(Debug, Clone)]
pub struct PlayerSpec {
    pub subset: VariableSubset,
    pub data: Option<TabularDistribution>,
    pub model: Model,
    pub batch_size: usize,
    pub inner_steps: usize,
    pub step: StepRule,
}

impl PlayerSpec {
    /// A player on the whole collection.
    pub fn new(model: Model, data: Option<TabularDistribution>) -> Self {
        Self {
            subset: VariableSubset::full(model.space()),
            data,
            model,
            batch_size: 256,
            inner_steps: 8,
            step: StepRule::constant(0.1),
        }
    }

    pub fn state(&self, index: usize) -> PlayerState {
        PlayerState {
            index,
            subset: self.subset.clone(),
            data: self.data.clone(),
            model: self.model.clone(),
            batch_size: self.batch_size,
            inner_steps: self.inner_steps,
            step: self.step,
            updates: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameSpec {
    /// The full variable collection.
    pub space: FiniteSpace,
    pub players: Vec<PlayerSpec>,
    pub alpha: AlphaSchedule,
    pub rounds: u64,
    pub selection: PlayerSelection,
    pub master_seed: u64,
    /// Train on exact mixtures of peer tables instead of sampled batches.
    pub exact_mixtures: bool,
}

impl GameSpec {
    pub fn new(space: FiniteSpace, players: Vec<PlayerSpec>, alpha: AlphaSchedule) -> Self {
        Self {
            space,
            players,
            alpha,
            rounds: 100,
            selection: PlayerSelection::RoundRobin,
            master_seed: 0,
            exact_mixtures: false,
        }
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn subsets(&self) -> Vec<VariableSubset> {
        self.players.iter().map(|p| p.subset.clone()).collect()
    }

    pub fn is_heterogeneous(&self) -> bool {
        self.players.iter().any(|p| !p.subset.is_full())
    }

    /// Every problem with the spec, not just the first.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let n = self.players.len();
        if n == 0 {
            issues.push(ValidationIssue::new(
                "/players",
                "at least one player is required",
            ));
        }
        if self.alpha.n_players() != n {
            issues.push(ValidationIssue::new(
                "/alpha",
                format!(
                    "alpha is for {} players but {n} are configured",
                    self.alpha.n_players()
                ),
            ));
            return issues;
        }
        for (i, p) in self.players.iter().enumerate() {
            let at = |f: &str| format!("/players/{i}/{f}");
            if p.subset.parent() != &self.space {
                issues.push(ValidationIssue::new(
                    at("subset"),
                    "subset of a different collection",
                ));
            }
            if p.model.space() != p.subset.space() {
                issues.push(ValidationIssue::new(
                    at("model"),
                    "model space differs from the player's variables",
                ));
            }
            if let Some(d) = &p.data {
                if d.space() != p.subset.space() {
                    issues.push(ValidationIssue::new(
                        at("data"),
                        "data space differs from the player's variables",
                    ));
                }
            }
            if p.batch_size == 0 {
                issues.push(ValidationIssue::new(at("batch_size"), "must be at least 1"));
            }
            if p.inner_steps == 0 {
                issues.push(ValidationIssue::new(
                    at("inner_steps"),
                    "must be at least 1",
                ));
            }
            if !(p.step.size > 0.0 && p.step.size.is_finite()) {
                issues.push(ValidationIssue::new(
                    at("step_size"),
                    "must be positive and finite",
                ));
            }
        }
        for (s, seg) in self.alpha.segments().iter().enumerate() {
            for i in 0..n {
                if seg.alpha.get(i, i) > 0.0 && self.players[i].data.is_none() {
                    issues.push(ValidationIssue::new(
                        format!("/players/{i}/data"),
                        format!(
                            "player {i} has self-weight {} in alpha segment {s} but no data",
                            seg.alpha.get(i, i)
                        ),
                    ));
                }
                for j in 0..n {
                    if i != j
                        && seg.alpha.get(i, j) > 0.0
                        && self.players[i]
                            .subset
                            .overlap(&self.players[j].subset)
                            .is_none()
                    {
                        issues.push(ValidationIssue::new(
                            format!("/alpha/{i}/{j}"),
                            format!(
                                "players {i} and {j} share no variables but alpha[{i}][{j}] > 0"
                            ),
                        ));
                    }
                }
            }
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// Equilibrium reference per player for one `alpha`, each on the
    /// player's own variables.
    ///
    /// Targets on partial subsets are lifted to the full collection with a
    /// uniform completion, the game is solved there, and the result is
    /// marginalized back. Data-free players contribute a placeholder that
    /// carries zero weight.
    pub fn reference(&self, alpha: &AlphaMatrix) -> Result<Vec<TabularDistribution>> {
        let full = self.space.clone();
        let lifted: Vec<TabularDistribution> = self
            .players
            .iter()
            .map(|p| match &p.data {
                None => Ok(TabularDistribution::uniform(full.clone())),
                Some(d) if p.subset.is_full() => Ok(d.clone()),
                Some(d) => lift(d, &full),
            })
            .collect::<Result<_>>()?;
        let eq = solve_exact(&lifted, alpha)?;
        eq.distributions
            .iter()
            .zip(&self.players)
            .map(|(d, p)| marginalize(d, p.subset.space()))
            .collect()
    }

    /// References for every schedule segment, in segment order.
    pub fn references(&self) -> Result<Vec<Vec<TabularDistribution>>> {
        self.alpha
            .segments()
            .iter()
            .map(|s| self.reference(&s.alpha))
            .collect()
    }
}

/// Extends `d` to `full` by a uniform distribution over the other variables.
fn lift(d: &TabularDistribution, full: &FiniteSpace) -> Result<TabularDistribution> {
    let proj = projection(full, d.space())?;
    let spread = (full.total_size() / d.space().total_size()) as f64;
    let probs = proj.iter().map(|&v| d.prob(v) / spread).collect();
    TabularDistribution::from_weights(full.clone(), probs)
}

/// Expected utility of player `i` given every player's current table:
/// `a_ii sum pi_i log p_i + sum_{j != i} a_ij sum p_j log p_i`.
pub fn utility(
    player: usize,
    models: &[TabularDistribution],
    pi: &[TabularDistribution],
    alpha: &AlphaMatrix,
) -> f64 {
    let subsets: Vec<VariableSubset> = models
        .iter()
        .map(|m| VariableSubset::full(m.space()))
        .collect();
    let pi: Vec<Option<&TabularDistribution>> = pi.iter().map(Some).collect();
    utility_on_subsets(player, &subsets, models, &pi, alpha)
}

/// [`utility`] for players on variable subsets; peers are scored on the
/// overlap marginals.
pub fn utility_on_subsets(
    player: usize,
    subsets: &[VariableSubset],
    models: &[TabularDistribution],
    pi: &[Option<&TabularDistribution>],
    alpha: &AlphaMatrix,
) -> f64 {
    let i = player;
    let mut u = 0.0;
    let a_ii = alpha.get(i, i);
    if a_ii > 0.0 {
        match pi[i] {
            Some(d) => u += a_ii * cross_term(d.probs(), models[i].probs()),
            None => return f64::NAN,
        }
    }
    for j in 0..models.len() {
        let w = alpha.get(i, j);
        if j == i || w == 0.0 {
            continue;
        }
        let term = if subsets[i].space() == subsets[j].space() {
            cross_term(models[j].probs(), models[i].probs())
        } else {
            match subsets[i].overlap(&subsets[j]) {
                None => continue,
                Some(ov) => match (
                    marginalize(&models[j], ov.space()),
                    marginalize(&models[i], ov.space()),
                ) {
                    (Ok(q), Ok(p)) => cross_term(q.probs(), p.probs()),
                    _ => f64::NAN,
                },
            }
        };
        u += w * term;
    }
    u
}

/// Execution of player rounds, wherever the players live.
pub trait Backend {
    /// Computes `player`'s update for `round` and stages it. Peers keep
    /// seeing the previous model until [`Backend::publish`].
    fn play(&mut self, round: u64, player: usize, alpha_row: &[f64]) -> Result<usize>;

    /// Makes staged updates of `players` visible.
    fn publish(&mut self, players: &[usize]) -> Result<()>;

    /// Current table of every player, on its own variables.
    fn distributions(&mut self) -> Result<Vec<TabularDistribution>>;

    fn message_count(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    InProcess,
    /// Each player serves its model on a loopback TCP port.
    Socket,
}

/// All players in this process.
pub struct LocalBackend {
    players: Vec<PlayerState>,
    pending: Vec<Option<RoundOutcome>>,
    handles: Vec<ModelHandle>,
    subsets: Vec<VariableSubset>,
    transport: Box<dyn PeerTransport>,
    _servers: Vec<NodeServer>,
    master_seed: u64,
    exact: bool,
}

impl LocalBackend {
    pub fn new(spec: &GameSpec, kind: TransportKind) -> Result<Self> {
        let players: Vec<PlayerState> = spec
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| p.state(i))
            .collect();
        let handles: Vec<ModelHandle> = players
            .iter()
            .map(|p| ModelHandle::new(p.index, Schema::for_view(&p.subset), p.model.clone()))
            .collect();
        let (transport, servers): (Box<dyn PeerTransport>, Vec<NodeServer>) = match kind {
            TransportKind::InProcess => (
                Box::new(InProcessTransport::new(Responder::new(handles.clone()))),
                Vec::new(),
            ),
            TransportKind::Socket => {
                let servers = handles
                    .iter()
                    .map(|h| NodeServer::spawn("127.0.0.1:0", Responder::new(vec![h.clone()])))
                    .collect::<Result<Vec<_>>>()?;
                let addrs = servers.iter().map(|s| Some(s.addr())).collect();
                (
                    Box::new(SocketTransport::new(addrs, Duration::from_secs(30))),
                    servers,
                )
            }
        };
        Ok(Self {
            pending: vec![None; players.len()],
            subsets: spec.subsets(),
            players,
            handles,
            transport,
            _servers: servers,
            master_seed: spec.master_seed,
            exact: spec.exact_mixtures,
        })
    }

    pub fn players(&self) -> &[PlayerState] {
        &self.players
    }

    pub fn models(&self) -> Vec<Model> {
        self.players.iter().map(|p| p.model.clone()).collect()
    }

    /// Plays and publishes one round for `player`.
    pub fn run_round(&mut self, round: u64, player: usize, alpha_row: &[f64]) -> Result<usize> {
        let fallbacks = self.play(round, player, alpha_row)?;
        self.publish(&[player])?;
        Ok(fallbacks)
    }
}

impl Backend for LocalBackend {
    fn play(&mut self, round: u64, player: usize, alpha_row: &[f64]) -> Result<usize> {
        let state = self
            .players
            .get(player)
            .ok_or(Error::UnknownPlayer(player))?;
        let ctx = RoundContext {
            round,
            master_seed: self.master_seed,
            alpha_row,
            subsets: &self.subsets,
        };
        let outcome = if self.exact {
            let tables: Vec<TabularDistribution> = self
                .handles
                .iter()
                .map(|h| h.snapshot().distribution())
                .collect();
            player_round(state, &ctx, PeerSource::Exact(&tables))?
        } else {
            player_round(state, &ctx, PeerSource::Sampled(self.transport.as_ref()))?
        };
        let fallbacks = outcome.fallbacks;
        self.pending[player] = Some(outcome);
        Ok(fallbacks)
    }

    fn publish(&mut self, players: &[usize]) -> Result<()> {
        for &i in players {
            if let Some(outcome) = self.pending[i].take() {
                self.players[i].model = outcome.model;
                self.players[i].updates = outcome.updates;
                self.handles[i].publish(self.players[i].model.clone());
            }
        }
        Ok(())
    }

    fn distributions(&mut self) -> Result<Vec<TabularDistribution>> {
        Ok(self
            .players
            .iter()
            .map(|p| p.model.distribution())
            .collect())
    }

    fn message_count(&self) -> u64 {
        self.transport.message_count()
    }
}

/// Result of a full game.
#[derive(Debug, Clone)]
pub struct GameOutcome {
    pub history: RunHistory,
    /// Equilibrium reference per schedule segment.
    pub references: Vec<Vec<TabularDistribution>>,
    pub final_distributions: Vec<TabularDistribution>,
}

/// Players chosen to move in `round` (1-based).
pub fn select_players(
    selection: PlayerSelection,
    n: usize,
    master_seed: u64,
    round: u64,
) -> Vec<usize> {
    match selection {
        PlayerSelection::RoundRobin => vec![((round - 1) % n as u64) as usize],
        PlayerSelection::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(selection_seed(master_seed, round));
            vec![rng.gen_range(0..n)]
        }
        PlayerSelection::Simultaneous => (0..n).collect(),
    }
}

fn metric_rows(
    spec: &GameSpec,
    round: u64,
    dists: &[TabularDistribution],
    reference: &[TabularDistribution],
    alpha: &AlphaMatrix,
    subsets: &[VariableSubset],
) -> Vec<HistoryRow> {
    let pi: Vec<Option<&TabularDistribution>> =
        spec.players.iter().map(|p| p.data.as_ref()).collect();
    (0..dists.len())
        .map(|i| HistoryRow {
            round,
            player: i,
            kl_to_eq: kl_divergence(dists[i].probs(), reference[i].probs()),
            l1_to_eq: l1_distance(dists[i].probs(), reference[i].probs()),
            own_loglik: pi[i].map_or(f64::NAN, |d| cross_term(d.probs(), dists[i].probs())),
            utility: utility_on_subsets(i, subsets, dists, &pi, alpha),
        })
        .collect()
}

fn overlap_rows(
    round: u64,
    dists: &[TabularDistribution],
    subsets: &[VariableSubset],
) -> Result<Vec<OverlapRow>> {
    let mut rows = Vec::new();
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            if let Some(ov) = subsets[a].overlap(&subsets[b]) {
                let pa = marginalize(&dists[a], ov.space())?;
                let pb = marginalize(&dists[b], ov.space())?;
                rows.push(OverlapRow {
                    round,
                    player_a: a,
                    player_b: b,
                    overlap_l1: l1_distance(pa.probs(), pb.probs()),
                });
            }
        }
    }
    Ok(rows)
}

/// Drives a game on any backend, streaming rows into `sink`.
/// `track_overlap` adds pairwise overlap-agreement rows.
pub fn drive(
    spec: &GameSpec,
    backend: &mut dyn Backend,
    sink: &mut dyn HistorySink,
    track_overlap: bool,
) -> Result<GameOutcome> {
    spec.validate()?;
    let n = spec.n_players();
    let subsets = spec.subsets();
    let references = spec.references()?;
    let mut history = RunHistory::default();

    let mut record =
        |history: &mut RunHistory, round: u64, dists: &[TabularDistribution]| -> Result<()> {
            let seg = spec.alpha.segment_index(round);
            let alpha = spec.alpha.alpha_at(round);
            for row in metric_rows(spec, round, dists, &references[seg], alpha, &subsets) {
                sink.record(&row)?;
                history.rows.push(row);
            }
            if track_overlap {
                for row in overlap_rows(round, dists, &subsets)? {
                    sink.record_overlap(&row)?;
                    history.overlap_rows.push(row);
                }
            }
            Ok(())
        };

    let initial = backend.distributions()?;
    record(&mut history, 0, &initial)?;
    let mut last = initial;
    for round in 1..=spec.rounds {
        let alpha = spec.alpha.alpha_at(round);
        let movers = select_players(spec.selection, n, spec.master_seed, round);
        for &i in &movers {
            history.completion_fallbacks += backend
                .play(round, i, alpha.row(i))
                .map_err(|e| e.in_round(round, i))?;
            if spec.selection != PlayerSelection::Simultaneous {
                backend.publish(&[i]).map_err(|e| e.in_round(round, i))?;
            }
        }
        if spec.selection == PlayerSelection::Simultaneous {
            backend.publish(&movers)?;
        }
        history.selections.push(movers);
        last = backend.distributions()?;
        record(&mut history, round, &last)?;
    }
    history.messages = backend.message_count();
    Ok(GameOutcome {
        history,
        references,
        final_distributions: last,
    })
}

struct NullSink;

impl HistorySink for NullSink {
    fn record(&mut self, _row: &HistoryRow) -> Result<()> {
        Ok(())
    }
}

/// Runs a game whose players all work on the full collection, in process.
pub fn run_game(spec: &GameSpec) -> Result<GameOutcome> {
    if spec.is_heterogeneous() {
        return Err(Error::Schema(
            "players on variable subsets need the heterogeneous engine".into(),
        ));
    }
    let mut backend = LocalBackend::new(spec, TransportKind::InProcess)?;
    drive(spec, &mut backend, &mut NullSink, false)
}

/// Runs a game whose players may work on different variable subsets, in
/// process, recording pairwise overlap agreement.
pub fn run_heterogeneous_game(spec: &GameSpec) -> Result<GameOutcome> {
    let mut backend = LocalBackend::new(spec, TransportKind::InProcess)?;
    drive(spec, &mut backend, &mut NullSink, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TabularModel;

    fn two_point_game(alpha: AlphaMatrix) -> GameSpec {
        let s = FiniteSpace::single(2).unwrap();
        let players = (0..2)
            .map(|i| {
                PlayerSpec::new(
                    Model::Tabular(TabularModel::uniform(s.clone())),
                    Some(TabularDistribution::point_mass(s.clone(), i).unwrap()),
                )
            })
            .collect();
        GameSpec::new(s, players, AlphaSchedule::constant(alpha))
    }

    #[test]
    fn utility_of_uniform_models() {
        let s = FiniteSpace::single(4).unwrap();
        let u = TabularDistribution::uniform(s.clone());
        let pi = vec![
            TabularDistribution::point_mass(s.clone(), 0).unwrap(),
            TabularDistribution::point_mass(s.clone(), 3).unwrap(),
        ];
        let alpha = AlphaMatrix::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        for i in 0..2 {
            let v = utility(i, &[u.clone(), u.clone()], &pi, &alpha);
            assert!((v + 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn utility_at_equilibrium_is_negative_entropy() {
        let g = two_point_game(AlphaMatrix::symmetric(2, 0.5).unwrap());
        let pi: Vec<_> = g.players.iter().map(|p| p.data.clone().unwrap()).collect();
        let eq = solve_exact(&pi, g.alpha.alpha_at(0)).unwrap();
        for i in 0..2 {
            let v = utility(i, &eq.distributions, &pi, g.alpha.alpha_at(0));
            assert!((v + eq.distributions[i].entropy()).abs() < 1e-12);
        }
    }

    #[test]
    fn round_robin_and_random_selection() {
        assert_eq!(
            select_players(PlayerSelection::RoundRobin, 3, 0, 1),
            vec![0]
        );
        assert_eq!(
            select_players(PlayerSelection::RoundRobin, 3, 0, 5),
            vec![1]
        );
        assert_eq!(
            select_players(PlayerSelection::Simultaneous, 3, 0, 5),
            vec![0, 1, 2]
        );
        let a = select_players(PlayerSelection::UniformRandom, 3, 9, 4);
        assert_eq!(a, select_players(PlayerSelection::UniformRandom, 3, 9, 4));
        assert!(a[0] < 3);
    }

    #[test]
    fn zero_rounds_records_initial_state() {
        let mut g = two_point_game(AlphaMatrix::identity(2));
        g.rounds = 0;
        let out = run_game(&g).unwrap();
        assert_eq!(out.history.rows.len(), 2);
        assert!(out.history.rows.iter().all(|r| r.round == 0));
        assert_eq!(out.history.messages, 0);
    }

    #[test]
    fn validation_collects_issues() {
        let mut g = two_point_game(AlphaMatrix::identity(2));
        g.players[0].batch_size = 0;
        g.players[1].inner_steps = 0;
        g.players[1].data = None;
        let issues = g.issues();
        assert_eq!(issues.len(), 3, "{issues:?}");
    }

    #[test]
    fn failed_round_names_round_and_player() {
        let mut g = two_point_game(AlphaMatrix::symmetric(2, 0.5).unwrap());
        g.rounds = 3;
        let mut backend = LocalBackend::new(&g, TransportKind::InProcess).unwrap();
        // a NaN step size slips past nothing but the model itself
        backend.players[1].step = StepRule::constant(f64::NAN);
        let err = drive(&g, &mut backend, &mut NullSink, false).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Round {
                    round: 2,
                    player: 1,
                    ..
                }
            ),
            "{err}"
        );
        assert_eq!(backend.players()[1].updates, 0);
    }
}
