use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single configuration problem, addressed by a JSON-pointer-style path.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid alpha matrix: {0}")]
    InvalidAlpha(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(
        "singular system: players {players:?} have no path to a player with positive self-weight"
    )]
    Singular { players: Vec<usize> },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient samples from player {peer}: need {needed}, have {available}")]
    InsufficientSamples {
        peer: usize,
        needed: usize,
        available: usize,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no shared variables: {0}")]
    NoOverlap(String),

    #[error("observed configuration has zero probability: {0}")]
    ZeroSupport(String),

    #[error("transport error with player {peer}: {message}")]
    Transport { peer: usize, message: String },

    #[error("player {0} is unknown to this endpoint")]
    UnknownPlayer(usize),

    #[error("round {round}, player {player}: {source}")]
    Round {
        round: u64,
        player: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration ({} issue(s)): {}", .0.len(), join_issues(.0))]
    Validation(Vec<ValidationIssue>),

    /// Failure reported by a player hosted in another process.
    #[error("player {player} failed ({kind}): {message}")]
    Remote {
        player: usize,
        kind: String,
        message: String,
    },

    #[error("wire format error: {0}")]
    Wire(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn in_round(self, round: u64, player: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                player,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping round context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Validation(_) => "validation",
            Error::Transport { .. } | Error::UnknownPlayer(_) | Error::Wire(_) => "transport",
            Error::Io(_) => "io",
            Error::Remote { kind, .. } => match kind.as_str() {
                "validation" => "validation",
                "transport" => "transport",
                "io" => "io",
                _ => "runtime",
            },
            _ => "runtime",
        }
    }

    /// Process exit code: 2 validation, 3 runtime, 4 transport.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "validation" => 2,
            "transport" => 4,
            _ => 3,
        }
    }
}
