//! Peer protocol messages and their length-prefixed JSON framing.
//!
//! Every frame is a 4-byte big-endian length followed by a JSON object
//! `{"kind": ..., "request_id": ..., "payload": ...}`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::hetero::VariableSubset;
use crate::space::FiniteSpace;

/// Frames larger than this are rejected without reading the body.
pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    SampleRequest,
    SampleBatch,
    SchemaRequest,
    SchemaResponse,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    pub target_player: u32,
    pub count: u64,
    pub seed_tag: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaRequest {
    pub target_player: u32,
}

/// What a node declares about the outcomes it produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schema {
    Subset(VariableSubset),
    Space(FiniteSpace),
}

impl Schema {
    pub fn for_view(view: &VariableSubset) -> Self {
        if view.is_full() {
            Schema::Space(view.parent().clone())
        } else {
            Schema::Subset(view.clone())
        }
    }

    /// Space of the outcomes in this node's batches.
    pub fn space(&self) -> &FiniteSpace {
        match self {
            Schema::Subset(s) => s.space(),
            Schema::Space(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub code: u16,
    pub text: String,
}

pub const CODE_MALFORMED: u16 = 400;
pub const CODE_UNKNOWN_PLAYER: u16 = 404;
pub const CODE_INTERNAL: u16 = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    SampleRequest(SampleRequest),
    SampleBatch(SampleBatch),
    SchemaRequest(SchemaRequest),
    SchemaResponse(Schema),
    Error(ErrorPayload),
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::SampleRequest(_) => Kind::SampleRequest,
            Body::SampleBatch(_) => Kind::SampleBatch,
            Body::SchemaRequest(_) => Kind::SchemaRequest,
            Body::SchemaResponse(_) => Kind::SchemaResponse,
            Body::Error(_) => Kind::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub request_id: u64,
    pub body: Body,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMessage {
    kind: Kind,
    request_id: u64,
    payload: Value,
}

impl Serialize for Message {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let payload = match &self.body {
            Body::SampleRequest(p) => serde_json::to_value(p),
            Body::SampleBatch(p) => serde_json::to_value(p),
            Body::SchemaRequest(p) => serde_json::to_value(p),
            Body::SchemaResponse(p) => serde_json::to_value(p),
            Body::Error(p) => serde_json::to_value(p),
        }
        .map_err(S::Error::custom)?;
        RawMessage {
            kind: self.body.kind(),
            request_id: self.request_id,
            payload,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Message {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawMessage::deserialize(d)?;
        let p = raw.payload;
        let body = match raw.kind {
            Kind::SampleRequest => serde_json::from_value(p).map(Body::SampleRequest),
            Kind::SampleBatch => serde_json::from_value(p).map(Body::SampleBatch),
            Kind::SchemaRequest => serde_json::from_value(p).map(Body::SchemaRequest),
            Kind::SchemaResponse => serde_json::from_value(p).map(Body::SchemaResponse),
            Kind::Error => serde_json::from_value(p).map(Body::Error),
        }
        .map_err(D::Error::custom)?;
        Ok(Message {
            request_id: raw.request_id,
            body,
        })
    }
}

impl Message {
    pub fn new(request_id: u64, body: Body) -> Self {
        Self { request_id, body }
    }

    pub fn error(request_id: u64, code: u16, text: impl Into<String>) -> Self {
        Self::new(
            request_id,
            Body::Error(ErrorPayload {
                code,
                text: text.into(),
            }),
        )
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("message serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Wire(e.to_string()))
    }

    /// Length-prefixed frame bytes.
    pub fn encode(&self) -> Vec<u8> {
        encode_frame(&self.to_json())
    }
}

pub fn encode_frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Splits one frame off the front of `buf`: `(body, consumed)`.
pub fn decode_frame(buf: &[u8]) -> Result<(&[u8], usize)> {
    if buf.len() < 4 {
        return Err(Error::Wire("incomplete length prefix".into()));
    }
    let len = u32::from_be_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Wire(format!(
            "frame of {len} bytes exceeds the limit"
        )));
    }
    if buf.len() < 4 + len {
        return Err(Error::Wire("incomplete frame body".into()));
    }
    Ok((&buf[4..4 + len], 4 + len))
}

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame body; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds the limit"),
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Shape of a field on the wire, used to audit what the protocol can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    UnsignedInt,
    Float,
    /// Free text.
    Text,
    /// Text restricted to a fixed alphabet and length.
    HexId(usize),
    Array(Box<FieldType>),
    Object(Vec<(&'static str, FieldType)>),
    /// One of several shapes.
    OneOf(Vec<FieldType>),
}

fn space_shape() -> FieldType {
    FieldType::Object(vec![(
        "variables",
        FieldType::Array(Box::new(FieldType::Object(vec![
            ("name", FieldType::Text),
            ("card", FieldType::UnsignedInt),
        ]))),
    )])
}

/// Declared payload shape for every message kind.
pub fn wire_schema() -> Vec<(Kind, FieldType)> {
    use FieldType::*;
    vec![
        (
            Kind::SampleRequest,
            Object(vec![
                ("target_player", UnsignedInt),
                ("count", UnsignedInt),
                ("seed_tag", UnsignedInt),
            ]),
        ),
        (
            Kind::SampleBatch,
            Object(vec![
                ("space_id", HexId(16)),
                ("outcomes", Array(Box::new(UnsignedInt))),
                ("source_player", UnsignedInt),
                ("seed_tag", UnsignedInt),
            ]),
        ),
        (
            Kind::SchemaRequest,
            Object(vec![("target_player", UnsignedInt)]),
        ),
        (
            Kind::SchemaResponse,
            OneOf(vec![
                space_shape(),
                Object(vec![
                    ("parent", space_shape()),
                    ("members", Array(Box::new(Text))),
                ]),
            ]),
        ),
        (
            Kind::Error,
            Object(vec![("code", UnsignedInt), ("text", Text)]),
        ),
    ]
}

/// True if `value` fits `shape` exactly (no missing or extra fields).
pub fn conforms(value: &Value, shape: &FieldType) -> bool {
    match (shape, value) {
        (FieldType::UnsignedInt, Value::Number(n)) => n.is_u64(),
        (FieldType::Float, Value::Number(_)) => true,
        (FieldType::Text, Value::String(_)) => true,
        (FieldType::HexId(len), Value::String(s)) => {
            s.len() == *len && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
        }
        (FieldType::Array(inner), Value::Array(items)) => items.iter().all(|v| conforms(v, inner)),
        (FieldType::Object(fields), Value::Object(map)) => {
            map.len() == fields.len()
                && fields
                    .iter()
                    .all(|(name, t)| map.get(*name).is_some_and(|v| conforms(v, t)))
        }
        (FieldType::OneOf(options), v) => options.iter().any(|t| conforms(v, t)),
        _ => false,
    }
}
