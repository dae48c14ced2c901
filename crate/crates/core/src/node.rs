//! Multi-process execution: one child process per player.
//!
//! Children serve their model to peers over the TCP sample protocol and pull
//! peer batches the same way. The orchestrator drives them over a separate
//! control channel on the child's stdin/stdout using the same length-prefixed
//! JSON framing. The control channel carries commands, acknowledgements and,
//! for metric evaluation only, the child's current probability table.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command as Process, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::parse_config;
use crate::distribution::TabularDistribution;
use crate::engine::{
    player_round, Backend, GameSpec, PeerSource, PlayerState, RoundContext, RoundOutcome,
};
use crate::error::{Error, Result};
use crate::hetero::VariableSubset;
use crate::model::GenerativeModel;
use crate::transport::{
    read_frame, write_frame, ModelHandle, NodeServer, PeerTransport, Responder, Schema,
    SocketTransport,
};

/// Environment variable holding the first port of the per-player range.
pub const PORT_BASE_ENV: &str = "COOPGAME_PORT_BASE";

/// How long a node waits on a peer before reporting a transport error.
pub const PEER_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case")]
pub enum Command {
    Init {
        config: Value,
        base_dir: PathBuf,
        master_seed: u64,
        self_weight: Option<f64>,
        player: usize,
        bind: String,
    },
    Peers {
        addrs: Vec<SocketAddr>,
    },
    Play {
        round: u64,
        alpha_row: Vec<f64>,
    },
    Publish,
    Eval,
    Shutdown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "kebab-case")]
pub enum Reply {
    Ready { addr: SocketAddr },
    Ack,
    Played { fallbacks: usize },
    Table { probs: Vec<f64>, messages: u64 },
    Failed { kind: String, message: String },
}

fn send<W: Write, T: Serialize>(w: &mut W, msg: &T) -> std::io::Result<()> {
    let bytes = serde_json::to_vec(msg).map_err(std::io::Error::other)?;
    write_frame(w, &bytes)
}

fn receive<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<Option<T>> {
    match read_frame(r)? {
        None => Ok(None),
        Some(body) => Ok(Some(serde_json::from_slice(&body)?)),
    }
}

struct Hosted {
    state: PlayerState,
    seed: u64,
    subsets: Vec<VariableSubset>,
    handle: ModelHandle,
    server: NodeServer,
    transport: Option<SocketTransport>,
    pending: Option<RoundOutcome>,
}

impl Hosted {
    fn handle(&mut self, cmd: Command) -> Result<Reply> {
        match cmd {
            Command::Init { .. } => Err(Error::Schema("node is already initialized".into())),
            Command::Peers { addrs } => {
                let peers = addrs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| (j != self.state.index).then_some(*a))
                    .collect();
                self.transport = Some(SocketTransport::new(peers, PEER_TIMEOUT));
                Ok(Reply::Ack)
            }
            Command::Play { round, alpha_row } => {
                let transport = self
                    .transport
                    .as_ref()
                    .ok_or_else(|| Error::Schema("peers were never announced".into()))?;
                let ctx = RoundContext {
                    round,
                    master_seed: self.seed,
                    alpha_row: &alpha_row,
                    subsets: &self.subsets,
                };
                let outcome = player_round(&self.state, &ctx, PeerSource::Sampled(transport))?;
                let fallbacks = outcome.fallbacks;
                self.pending = Some(outcome);
                Ok(Reply::Played { fallbacks })
            }
            Command::Publish => {
                if let Some(o) = self.pending.take() {
                    self.state.model = o.model;
                    self.state.updates = o.updates;
                    self.handle.publish(self.state.model.clone());
                }
                Ok(Reply::Ack)
            }
            Command::Eval => Ok(Reply::Table {
                probs: self.state.model.probs().to_vec(),
                messages: self.transport.as_ref().map_or(0, |t| t.message_count()),
            }),
            Command::Shutdown => Ok(Reply::Ack),
        }
    }
}

fn failed(e: &Error) -> Reply {
    Reply::Failed {
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

fn init(cmd: Command) -> Result<Hosted> {
    let Command::Init {
        config,
        base_dir,
        master_seed,
        self_weight,
        player,
        bind,
    } = cmd
    else {
        return Err(Error::Schema("the first command must be init".into()));
    };
    let config = parse_config(config, &base_dir)?;
    let spec: GameSpec = config.game_for(master_seed, self_weight)?;
    let player_spec = spec
        .players
        .get(player)
        .ok_or(Error::UnknownPlayer(player))?;
    let state = player_spec.state(player);
    let handle = ModelHandle::new(player, Schema::for_view(&state.subset), state.model.clone());
    let server = NodeServer::spawn(bind.as_str(), Responder::new(vec![handle.clone()]))?;
    Ok(Hosted {
        state,
        seed: master_seed,
        subsets: spec.subsets(),
        handle,
        server,
        transport: None,
        pending: None,
    })
}

/// Child-process entry point: answers control commands until shutdown or
/// end of input.
pub fn serve_node<R: Read, W: Write>(input: R, output: W) -> Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    let Some(first) = receive::<_, Command>(&mut input)? else {
        return Ok(());
    };
    let mut hosted = match init(first) {
        Ok(h) => {
            send(
                &mut output,
                &Reply::Ready {
                    addr: h.server.addr(),
                },
            )?;
            output.flush()?;
            h
        }
        Err(e) => {
            send(&mut output, &failed(&e))?;
            output.flush()?;
            return Err(e);
        }
    };
    while let Some(cmd) = receive::<_, Command>(&mut input)? {
        let stop = matches!(cmd, Command::Shutdown);
        let reply = hosted.handle(cmd).unwrap_or_else(|e| failed(&e));
        send(&mut output, &reply)?;
        output.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}

struct NodeProcess {
    child: Child,
    input: BufWriter<ChildStdin>,
    output: BufReader<ChildStdout>,
}

/// Runs every player in its own child process.
pub struct ProcessBackend {
    nodes: Vec<NodeProcess>,
    subsets: Vec<VariableSubset>,
    messages: u64,
}

/// Settings for launching node processes.
#[derive(Debug, Clone)]
pub struct Launch {
    /// Executable that implements the hidden `node` subcommand.
    pub exe: PathBuf,
    /// First port of the per-player range; ephemeral ports when `None`.
    pub port_base: Option<u16>,
}

impl Launch {
    /// The current executable, with the port base taken from the environment.
    pub fn current() -> Result<Self> {
        Ok(Self {
            exe: std::env::current_exe()?,
            port_base: port_base_from_env()?,
        })
    }

    pub fn with_exe(exe: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            exe: exe.as_ref().to_path_buf(),
            port_base: port_base_from_env()?,
        })
    }
}

pub fn port_base_from_env() -> Result<Option<u16>> {
    match std::env::var(PORT_BASE_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Range(format!("{PORT_BASE_ENV}={v} is not a port number"))),
    }
}

impl ProcessBackend {
    /// Starts one node per player of `spec`. The nodes rebuild the game from
    /// `raw_config`, with `spec.master_seed` and, for sweep points, the given
    /// self-weight.
    pub fn launch(
        launch: &Launch,
        raw_config: &Value,
        base_dir: &Path,
        spec: &GameSpec,
        self_weight: Option<f64>,
    ) -> Result<Self> {
        if spec.exact_mixtures {
            return Err(Error::Schema(
                "exact mixtures are only available in a single process".into(),
            ));
        }
        let n = spec.n_players();
        let mut backend = Self {
            nodes: Vec::with_capacity(n),
            subsets: spec.subsets(),
            messages: 0,
        };
        for player in 0..n {
            let mut child = Process::new(&launch.exe)
                .arg("node")
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Transport {
                    peer: player,
                    message: format!("cannot start node process {}: {e}", launch.exe.display()),
                })?;
            let input = BufWriter::new(child.stdin.take().expect("piped stdin"));
            let output = BufReader::new(child.stdout.take().expect("piped stdout"));
            backend.nodes.push(NodeProcess {
                child,
                input,
                output,
            });
        }
        let base = base_dir
            .canonicalize()
            .unwrap_or_else(|_| base_dir.to_path_buf());
        let mut addrs = Vec::with_capacity(n);
        for player in 0..n {
            let bind = match launch.port_base {
                Some(p) => format!("127.0.0.1:{}", p as usize + player),
                None => "127.0.0.1:0".to_string(),
            };
            let reply = backend.call(
                player,
                &Command::Init {
                    config: raw_config.clone(),
                    base_dir: base.clone(),
                    master_seed: spec.master_seed,
                    self_weight,
                    player,
                    bind,
                },
            )?;
            match reply {
                Reply::Ready { addr } => addrs.push(addr),
                other => return Err(unexpected(player, &other)),
            }
        }
        for player in 0..n {
            backend.expect_ack(
                player,
                &Command::Peers {
                    addrs: addrs.clone(),
                },
            )?;
        }
        Ok(backend)
    }

    fn call(&mut self, player: usize, cmd: &Command) -> Result<Reply> {
        let node = &mut self.nodes[player];
        let lost = |e: std::io::Error| Error::Transport {
            peer: player,
            message: format!("node process unreachable: {e}"),
        };
        send(&mut node.input, cmd).map_err(lost)?;
        node.input.flush().map_err(lost)?;
        let reply: Reply = receive(&mut node.output)?.ok_or_else(|| Error::Transport {
            peer: player,
            message: "node process exited".into(),
        })?;
        if let Reply::Failed { kind, message } = reply {
            return Err(Error::Remote {
                player,
                kind,
                message,
            });
        }
        Ok(reply)
    }

    fn expect_ack(&mut self, player: usize, cmd: &Command) -> Result<()> {
        match self.call(player, cmd)? {
            Reply::Ack => Ok(()),
            other => Err(unexpected(player, &other)),
        }
    }
}

fn unexpected(player: usize, reply: &Reply) -> Error {
    Error::Transport {
        peer: player,
        message: format!("unexpected control reply {reply:?}"),
    }
}

impl Backend for ProcessBackend {
    fn play(&mut self, round: u64, player: usize, alpha_row: &[f64]) -> Result<usize> {
        if player >= self.nodes.len() {
            return Err(Error::UnknownPlayer(player));
        }
        match self.call(
            player,
            &Command::Play {
                round,
                alpha_row: alpha_row.to_vec(),
            },
        )? {
            Reply::Played { fallbacks } => Ok(fallbacks),
            other => Err(unexpected(player, &other)),
        }
    }

    fn publish(&mut self, players: &[usize]) -> Result<()> {
        for &p in players {
            self.expect_ack(p, &Command::Publish)?;
        }
        Ok(())
    }

    fn distributions(&mut self) -> Result<Vec<TabularDistribution>> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut messages = 0;
        for player in 0..self.nodes.len() {
            match self.call(player, &Command::Eval)? {
                Reply::Table { probs, messages: m } => {
                    let space = self.subsets[player].space().clone();
                    if probs.len() != space.total_size() {
                        return Err(unexpected(player, &Reply::Table { probs, messages: m }));
                    }
                    messages += m;
                    out.push(TabularDistribution::from_parts_unchecked(space, probs));
                }
                other => return Err(unexpected(player, &other)),
            }
        }
        self.messages = messages;
        Ok(out)
    }

    fn message_count(&self) -> u64 {
        self.messages
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        for node in &mut self.nodes {
            let _ = send(&mut node.input, &Command::Shutdown).and_then(|_| node.input.flush());
        }
        for node in &mut self.nodes {
            let _ = receive::<_, Reply>(&mut node.output);
            if node.child.try_wait().ok().flatten().is_none() {
                std::thread::sleep(Duration::from_millis(10));
                if node.child.try_wait().ok().flatten().is_none() {
                    let _ = node.child.kill();
                }
            }
            let _ = node.child.wait();
        }
    }
}
