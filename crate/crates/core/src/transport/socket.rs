use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::batch::SampleBatch;
use crate::error::{Error, Result};

use super::{
    read_frame, reassemble, schema_from_frame, write_frame, Body, Message, PeerTransport,
    Responder, SampleRequest, Schema, SchemaRequest, CODE_MALFORMED,
};

/// Connections are closed after this many undecodable frames.
pub const MALFORMED_LIMIT: usize = 3;

/// TCP responder for one or more locally hosted players.
pub struct NodeServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl NodeServer {
    pub fn spawn(addr: impl ToSocketAddrs, responder: Responder) -> Result<Self> {
        Self::from_listener(TcpListener::bind(addr)?, responder)
    }

    pub fn from_listener(listener: TcpListener, responder: Responder) -> Result<Self> {
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let accept = std::thread::Builder::new()
            .name(format!("serve-{addr}"))
            .spawn(move || {
                for stream in listener.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let responder = responder.clone();
                    let _ =
                        std::thread::Builder::new()
                            .name("serve-conn".into())
                            .spawn(move || {
                                if let Err(e) = handle_connection(stream, &responder) {
                                    log::debug!("connection closed: {e}");
                                }
                            });
                }
            })?;
        Ok(Self {
            addr,
            shutdown,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for NodeServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(stream: TcpStream, responder: &Responder) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut malformed = 0;
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(body)) => body,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                // oversized frame: the stream cannot be resynchronized
                let reply = Message::error(0, CODE_MALFORMED, e.to_string());
                write_frame(&mut writer, &reply.to_json())?;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        match Message::from_json(&body) {
            Ok(request) => {
                for reply in responder.respond(&request) {
                    let bytes = reply.to_json();
                    writer.write_all(&(bytes.len() as u32).to_be_bytes())?;
                    writer.write_all(&bytes)?;
                }
                writer.flush()?;
            }
            Err(e) => {
                malformed += 1;
                let reply = Message::error(0, CODE_MALFORMED, e.to_string());
                write_frame(&mut writer, &reply.to_json())?;
                if malformed >= MALFORMED_LIMIT {
                    return Ok(());
                }
            }
        }
    }
}

/// Blocking TCP client with one pooled connection per peer.
pub struct SocketTransport {
    peers: Vec<Option<SocketAddr>>,
    connections: Vec<Mutex<Option<TcpStream>>>,
    timeout: Duration,
    next_id: AtomicU64,
    messages: AtomicU64,
}

impl SocketTransport {
    pub fn new(peers: Vec<Option<SocketAddr>>, timeout: Duration) -> Self {
        let connections = peers.iter().map(|_| Mutex::new(None)).collect();
        Self {
            peers,
            connections,
            timeout,
            next_id: AtomicU64::new(1),
            messages: AtomicU64::new(0),
        }
    }

    fn transport_error(peer: usize, e: io::Error) -> Error {
        let message = match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => "timed out".to_string(),
            _ => e.to_string(),
        };
        Error::Transport { peer, message }
    }

    /// Sends `request` and collects frames until `done` says the response is
    /// complete.
    fn exchange(
        &self,
        target: usize,
        request: &Message,
        mut done: impl FnMut(&Message) -> bool,
    ) -> Result<Vec<Message>> {
        let addr = self
            .peers
            .get(target)
            .copied()
            .flatten()
            .ok_or(Error::UnknownPlayer(target))?;
        let mut slot = self.connections[target]
            .lock()
            .expect("connection lock poisoned");
        if slot.is_none() {
            let stream = TcpStream::connect_timeout(&addr, self.timeout)
                .map_err(|e| Self::transport_error(target, e))?;
            stream
                .set_nodelay(true)
                .and_then(|_| stream.set_read_timeout(Some(self.timeout)))
                .and_then(|_| stream.set_write_timeout(Some(self.timeout)))
                .map_err(|e| Self::transport_error(target, e))?;
            *slot = Some(stream);
        }
        let stream = slot.as_mut().expect("connected above");
        let result = (|| -> Result<Vec<Message>> {
            write_frame(stream, &request.to_json())
                .map_err(|e| Self::transport_error(target, e))?;
            self.messages.fetch_add(1, Ordering::Relaxed);
            let mut frames = Vec::new();
            loop {
                let body = read_frame(stream)
                    .map_err(|e| Self::transport_error(target, e))?
                    .ok_or_else(|| Error::Transport {
                        peer: target,
                        message: "connection closed mid-response".into(),
                    })?;
                self.messages.fetch_add(1, Ordering::Relaxed);
                let msg = Message::from_json(&body)?;
                let finished = matches!(msg.body, Body::Error(_)) || done(&msg);
                frames.push(msg);
                if finished {
                    return Ok(frames);
                }
            }
        })();
        if result.is_err() {
            *slot = None;
        }
        result
    }
}

impl PeerTransport for SocketTransport {
    fn request_samples(&self, target: usize, count: usize, seed_tag: u64) -> Result<SampleBatch> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = Message::new(
            id,
            Body::SampleRequest(SampleRequest {
                target_player: target as u32,
                count: count as u64,
                seed_tag,
            }),
        );
        let mut received = 0usize;
        let frames = self.exchange(target, &request, |m| {
            if let Body::SampleBatch(b) = &m.body {
                received += b.outcomes.len();
            }
            received >= count
        })?;
        reassemble(target, id, frames)
    }

    fn request_schema(&self, target: usize) -> Result<Schema> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = Message::new(
            id,
            Body::SchemaRequest(SchemaRequest {
                target_player: target as u32,
            }),
        );
        let mut frames = self.exchange(target, &request, |_| true)?;
        schema_from_frame(target, id, frames.remove(0))
    }

    fn message_count(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }
}
