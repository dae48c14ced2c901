use std::sync::atomic::{AtomicU64, Ordering};

use crate::batch::SampleBatch;
use crate::error::Result;

use super::{
    reassemble, schema_from_frame, Body, Message, PeerTransport, Responder, SampleRequest, Schema,
    SchemaRequest,
};

/// Transport for single-process runs. Requests and responses still pass
/// through the JSON wire encoding so both transports see identical bytes.
pub struct InProcessTransport {
    responder: Responder,
    next_id: AtomicU64,
    messages: AtomicU64,
}

impl InProcessTransport {
    pub fn new(responder: Responder) -> Self {
        Self {
            responder,
            next_id: AtomicU64::new(1),
            messages: AtomicU64::new(0),
        }
    }

    fn exchange(&self, request: Message) -> Result<Vec<Message>> {
        let wire = request.to_json();
        let decoded = Message::from_json(&wire)?;
        self.messages.fetch_add(1, Ordering::Relaxed);
        let responses = self.responder.respond(&decoded);
        self.messages
            .fetch_add(responses.len() as u64, Ordering::Relaxed);
        responses
            .iter()
            .map(|m| Message::from_json(&m.to_json()))
            .collect()
    }
}

impl PeerTransport for InProcessTransport {
    fn request_samples(&self, target: usize, count: usize, seed_tag: u64) -> Result<SampleBatch> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let frames = self.exchange(Message::new(
            id,
            Body::SampleRequest(SampleRequest {
                target_player: target as u32,
                count: count as u64,
                seed_tag,
            }),
        ))?;
        reassemble(target, id, frames)
    }

    fn request_schema(&self, target: usize) -> Result<Schema> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut frames = self.exchange(Message::new(
            id,
            Body::SchemaRequest(SchemaRequest {
                target_player: target as u32,
            }),
        ))?;
        schema_from_frame(target, id, frames.remove(0))
    }

    fn message_count(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }
}
