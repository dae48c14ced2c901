//! The node boundary. A learning player obtains synthetic batches from its
//! peers through a [`PeerTransport`]; nothing but sampled outcomes and space
//! declarations ever crosses it.

mod inprocess;
mod message;
mod socket;

use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use inprocess::InProcessTransport;
pub use message::{
    conforms, decode_frame, encode_frame, read_frame, wire_schema, write_frame, Body, ErrorPayload,
    FieldType, Kind, Message, SampleRequest, Schema, SchemaRequest, CODE_INTERNAL, CODE_MALFORMED,
    CODE_UNKNOWN_PLAYER, MAX_FRAME_BYTES,
};
pub use socket::{NodeServer, SocketTransport, MALFORMED_LIMIT};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::model::{GenerativeModel, Model};

/// Maximum number of outcomes per SAMPLE_BATCH frame.
pub const CHUNK_CAP: usize = 1 << 14;

pub trait PeerTransport: Send + Sync {
    /// Exactly `count` outcomes from `target`'s current model snapshot.
    fn request_samples(&self, target: usize, count: usize, seed_tag: u64) -> Result<SampleBatch>;

    fn request_schema(&self, target: usize) -> Result<Schema>;

    /// Frames exchanged so far, requests and responses.
    fn message_count(&self) -> u64;
}

/// Shared, atomically swappable model snapshot for one player.
///
/// Readers clone the inner `Arc` and sample from that immutable snapshot, so
/// a concurrent `publish` can never tear a batch.
#[derive(Clone)]
pub struct ModelHandle {
    player: usize,
    schema: Schema,
    current: Arc<RwLock<Arc<Model>>>,
}

impl ModelHandle {
    pub fn new(player: usize, schema: Schema, model: Model) -> Self {
        Self {
            player,
            schema,
            current: Arc::new(RwLock::new(Arc::new(model))),
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn snapshot(&self) -> Arc<Model> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    pub fn publish(&self, model: Model) {
        *self.current.write().expect("snapshot lock poisoned") = Arc::new(model);
    }
}

/// Answers peer requests for a set of locally hosted players.
#[derive(Clone)]
pub struct Responder {
    handles: Vec<ModelHandle>,
    chunk_cap: usize,
}

impl Responder {
    pub fn new(handles: Vec<ModelHandle>) -> Self {
        Self::with_chunk_cap(handles, CHUNK_CAP)
    }

    pub fn with_chunk_cap(handles: Vec<ModelHandle>, chunk_cap: usize) -> Self {
        Self {
            handles,
            chunk_cap: chunk_cap.max(1),
        }
    }

    fn find(&self, player: u32) -> Option<&ModelHandle> {
        self.handles
            .iter()
            .find(|h| h.player as u64 == player as u64)
    }

    /// Response frames for one request, in send order.
    pub fn respond(&self, request: &Message) -> Vec<Message> {
        let id = request.request_id;
        match &request.body {
            Body::SampleRequest(req) => {
                let Some(handle) = self.find(req.target_player) else {
                    return vec![Message::error(
                        id,
                        CODE_UNKNOWN_PLAYER,
                        format!("player {} is not served here", req.target_player),
                    )];
                };
                let snapshot = handle.snapshot();
                let mut rng = ChaCha8Rng::seed_from_u64(req.seed_tag);
                let outcomes = snapshot.sample_outcomes(req.count as usize, &mut rng);
                let space_id = snapshot.space().id();
                let chunk = |part: &[u32]| {
                    Message::new(
                        id,
                        Body::SampleBatch(SampleBatch {
                            space_id: space_id.clone(),
                            outcomes: part.to_vec(),
                            source_player: req.target_player,
                            seed_tag: req.seed_tag,
                        }),
                    )
                };
                if outcomes.is_empty() {
                    vec![chunk(&[])]
                } else {
                    outcomes.chunks(self.chunk_cap).map(chunk).collect()
                }
            }
            Body::SchemaRequest(req) => match self.find(req.target_player) {
                Some(h) => vec![Message::new(id, Body::SchemaResponse(h.schema.clone()))],
                None => vec![Message::error(
                    id,
                    CODE_UNKNOWN_PLAYER,
                    format!("player {} is not served here", req.target_player),
                )],
            },
            _ => vec![Message::error(id, CODE_MALFORMED, "expected a request")],
        }
    }

    pub fn chunk_cap(&self) -> usize {
        self.chunk_cap
    }
}

/// Number of SAMPLE_BATCH frames a response of `count` outcomes spans.
pub fn chunks_for(count: usize, cap: usize) -> usize {
    count.div_ceil(cap).max(1)
}

/// Joins response chunks into one batch, checking they belong together.
pub(crate) fn reassemble(
    target: usize,
    request_id: u64,
    frames: Vec<Message>,
) -> Result<SampleBatch> {
    let mut out: Option<SampleBatch> = None;
    for frame in frames {
        if frame.request_id != request_id {
            return Err(Error::Transport {
                peer: target,
                message: format!(
                    "response id {} does not match request {request_id}",
                    frame.request_id
                ),
            });
        }
        match frame.body {
            Body::SampleBatch(b) => match &mut out {
                None => out = Some(b),
                Some(acc) => {
                    if acc.space_id != b.space_id
                        || acc.source_player != b.source_player
                        || acc.seed_tag != b.seed_tag
                    {
                        return Err(Error::Transport {
                            peer: target,
                            message: "inconsistent chunks".into(),
                        });
                    }
                    acc.outcomes.extend_from_slice(&b.outcomes);
                }
            },
            Body::Error(e) => return Err(error_from_payload(target, &e)),
            other => {
                return Err(Error::Transport {
                    peer: target,
                    message: format!("unexpected {:?} frame", other.kind()),
                })
            }
        }
    }
    out.ok_or_else(|| Error::Transport {
        peer: target,
        message: "empty response".into(),
    })
}

pub(crate) fn error_from_payload(target: usize, e: &ErrorPayload) -> Error {
    if e.code == CODE_UNKNOWN_PLAYER {
        Error::UnknownPlayer(target)
    } else {
        Error::Transport {
            peer: target,
            message: format!("peer replied {}: {}", e.code, e.text),
        }
    }
}

pub(crate) fn schema_from_frame(target: usize, request_id: u64, frame: Message) -> Result<Schema> {
    if frame.request_id != request_id {
        return Err(Error::Transport {
            peer: target,
            message: "response id does not match request".into(),
        });
    }
    match frame.body {
        Body::SchemaResponse(s) => Ok(s),
        Body::Error(e) => Err(error_from_payload(target, &e)),
        other => Err(Error::Transport {
            peer: target,
            message: format!("unexpected {:?} frame", other.kind()),
        }),
    }
}
