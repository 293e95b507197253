//! Sequencer and network endpoints.
//!
//! Every source message and client request funnels into one task that owns
//! the [`Session`]; it encodes each outgoing message once and hands the bytes
//! to per-client outboxes, so client I/O never blocks it.

use crate::config::ServerConfig;
use crate::outbox::{Outbox, PushOutcome};
use crate::session::{ClientId, Outbound, Session};
use crate::source::{Command, Source};
use crate::stats::{Stats, StatsSnapshot};
use bytes::Bytes;
use futures_util::{SinkExt, StreamExt};
use needleguide_core::protocol::{encode, error_code, FrameDecoder, Message};
use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite;
use tracing::{debug, info, warn};

const EVENT_QUEUE: usize = 4096;
const COMMAND_QUEUE: usize = 1024;
/// Time a client gets to read its final error before the socket closes.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("source: {0}")]
    Source(String),
}

pub enum Event {
    Source(Message),
    SourceRejected { origin: Option<ClientId>, reason: String },
    ClientConnected { id: ClientId, outbox: Arc<Outbox> },
    ClientMessage { id: ClientId, message: Message },
    ClientMalformed { id: ClientId, reason: String },
    ClientGone { id: ClientId },
}

struct Client {
    outbox: Arc<Outbox>,
    /// `None` receives every body.
    bodies: Option<HashSet<u16>>,
}

struct Sequencer {
    session: Session,
    clients: BTreeMap<ClientId, Client>,
    commands: mpsc::Sender<Command>,
    stats: Arc<Stats>,
    epoch: Instant,
    greeted: watch::Sender<usize>,
}

impl Sequencer {
    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    async fn run(mut self, mut events: mpsc::Receiver<Event>, heartbeat: Duration, mut shutdown: watch::Receiver<bool>) {
        let mut beat = tokio::time::interval(heartbeat);
        beat.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                ev = events.recv() => match ev {
                    Some(ev) => self.handle(ev),
                    None => break,
                },
                _ = beat.tick() => {
                    let out = self.session.tick(self.now());
                    self.dispatch(out);
                }
                _ = shutdown.changed() => break,
            }
        }
        for c in self.clients.values() {
            c.outbox.finish();
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Source(m) => {
                let started = Instant::now();
                let needle = matches!(&m, Message::RigidBodyFrame(f) if f.body_id == self.session.config().bodies.needle);
                let out = self.session.ingest(m, self.now());
                let guided = needle && out.iter().any(|o| matches!(o, Outbound::Broadcast(Message::Guidance(_))));
                self.dispatch(out);
                if guided {
                    self.stats.record_latency(started.elapsed().as_secs_f64() * 1e3);
                }
                self.stats.set_session(self.session.counters());
            }
            Event::SourceRejected { origin, reason } => {
                if let Some(id) = origin {
                    self.send_to(id, &Message::error(error_code::COMMAND_REJECTED, reason));
                }
            }
            Event::ClientConnected { id, outbox } => {
                self.stats.client_connected();
                self.clients.insert(id, Client { outbox, bodies: None });
            }
            Event::ClientMessage { id, message } => {
                if !self.clients.contains_key(&id) {
                    return;
                }
                match &message {
                    Message::Subscribe(s) => {
                        if let Some(c) = self.clients.get_mut(&id) {
                            c.bodies = s.bodies.as_ref().map(|b| b.iter().copied().collect());
                        }
                    }
                    Message::Hello(_) => self.greeted.send_modify(|n| *n += 1),
                    _ => {}
                }
                let out = self.session.handle_client(id, message, self.now());
                self.dispatch(out);
            }
            Event::ClientMalformed { id, reason } => {
                self.stats.client_malformed();
                if let Some(c) = self.clients.remove(&id) {
                    if let Some(bytes) = self.encode(&Message::error(error_code::MALFORMED_MESSAGE, reason)) {
                        c.outbox.push(bytes);
                    }
                    c.outbox.finish();
                }
            }
            Event::ClientGone { id } => {
                if let Some(c) = self.clients.remove(&id) {
                    c.outbox.close();
                }
            }
        }
    }

    fn encode(&self, m: &Message) -> Option<Bytes> {
        match encode(m) {
            Ok(b) => Some(Bytes::from(b)),
            Err(e) => {
                self.stats.encode_failed();
                warn!("dropping unencodable {} message: {e}", m.msg_type());
                None
            }
        }
    }

    fn dispatch(&mut self, out: Vec<Outbound>) {
        for o in out {
            match o {
                Outbound::Broadcast(m) => self.broadcast(&m),
                Outbound::To(id, m) => self.send_to(id, &m),
                Outbound::Source(cmd, origin) => {
                    if self.commands.try_send((cmd, origin)).is_err() {
                        if let Some(id) = origin {
                            self.send_to(id, &Message::error(error_code::COMMAND_REJECTED, "source command queue is full"));
                        }
                    }
                }
            }
        }
    }

    fn broadcast(&mut self, m: &Message) {
        let Some(bytes) = self.encode(m) else { return };
        let body = match m {
            Message::RigidBodyFrame(f) => Some(f.body_id),
            _ => None,
        };
        let mut dropped = Vec::new();
        let mut sent = 0;
        for (id, c) in &self.clients {
            if let (Some(b), Some(filter)) = (body, &c.bodies) {
                if !filter.contains(&b) {
                    continue;
                }
            }
            let r = match m {
                Message::VideoFrame(v) => c.outbox.push_video(v.stream_id, bytes.clone()),
                _ => c.outbox.push(bytes.clone()),
            };
            match r {
                PushOutcome::Queued => sent += 1,
                PushOutcome::Replaced => self.stats.video_replaced(),
                PushOutcome::Closed => dropped.push(*id),
            }
        }
        self.stats.add_out(sent);
        for id in dropped {
            self.drop_client(id);
        }
    }

    fn send_to(&mut self, id: ClientId, m: &Message) {
        let Some(bytes) = self.encode(m) else { return };
        let Some(c) = self.clients.get(&id) else { return };
        match c.outbox.push(bytes) {
            PushOutcome::Closed => self.drop_client(id),
            _ => self.stats.add_out(1),
        }
    }

    fn drop_client(&mut self, id: ClientId) {
        if let Some(c) = self.clients.remove(&id) {
            if c.outbox.overflowed() {
                warn!("client {id} fell too far behind and was disconnected");
                self.stats.client_dropped();
            }
            c.outbox.close();
        }
    }
}

enum ReadEnd {
    Eof,
    Malformed(String),
}

async fn forward(decoder: &mut FrameDecoder, id: ClientId, events: &mpsc::Sender<Event>) -> Option<ReadEnd> {
    loop {
        match decoder.next_message() {
            Ok(Some(message)) => {
                if events.send(Event::ClientMessage { id, message }).await.is_err() {
                    return Some(ReadEnd::Eof);
                }
            }
            Ok(None) => return None,
            Err(e) => return Some(ReadEnd::Malformed(format!("malformed frame: {e}"))),
        }
    }
}

async fn read_tcp<R: AsyncRead + Unpin>(mut rd: R, id: ClientId, events: &mpsc::Sender<Event>) -> ReadEnd {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) | Err(_) => return ReadEnd::Eof,
            Ok(n) => n,
        };
        decoder.feed(&buf[..n]);
        if let Some(end) = forward(&mut decoder, id, events).await {
            return end;
        }
    }
}

async fn write_tcp<W: AsyncWrite + Unpin>(mut wr: W, outbox: &Outbox) {
    while let Some(b) = outbox.pop().await {
        if wr.write_all(&b).await.is_err() {
            outbox.close();
            return;
        }
    }
    let _ = wr.shutdown().await;
}

/// Runs one connection's reader and writer until either side ends. A
/// malformed reader leaves the writer running until the error is flushed.
async fn drive<RF, WF>(id: ClientId, outbox: Arc<Outbox>, events: mpsc::Sender<Event>, read: RF, write: WF)
where
    RF: std::future::Future<Output = ReadEnd>,
    WF: std::future::Future<Output = ()>,
{
    tokio::pin!(write);
    tokio::select! {
        end = read => match end {
            ReadEnd::Eof => outbox.close(),
            ReadEnd::Malformed(reason) => {
                debug!("client {id}: {reason}");
                let _ = events.send(Event::ClientMalformed { id, reason }).await;
                if tokio::time::timeout(DRAIN_TIMEOUT, &mut write).await.is_err() {
                    outbox.close();
                }
            }
        },
        _ = &mut write => {}
    }
    let _ = events.send(Event::ClientGone { id }).await;
}

async fn serve_tcp(stream: TcpStream, id: ClientId, events: mpsc::Sender<Event>, limit: usize) {
    let _ = stream.set_nodelay(true);
    let outbox = Arc::new(Outbox::new(limit));
    if events.send(Event::ClientConnected { id, outbox: outbox.clone() }).await.is_err() {
        return;
    }
    let (rd, wr) = stream.into_split();
    let ev = events.clone();
    let out = outbox.clone();
    drive(id, outbox, events, async move { read_tcp(rd, id, &ev).await }, async move { write_tcp(wr, &out).await }).await;
}

async fn serve_ws(stream: TcpStream, id: ClientId, events: mpsc::Sender<Event>, limit: usize) {
    let _ = stream.set_nodelay(true);
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!("websocket handshake failed: {e}");
            return;
        }
    };
    let outbox = Arc::new(Outbox::new(limit));
    if events.send(Event::ClientConnected { id, outbox: outbox.clone() }).await.is_err() {
        return;
    }
    let (mut sink, mut stream) = ws.split();
    let ev = events.clone();
    let read = async move {
        let mut decoder = FrameDecoder::new();
        while let Some(msg) = stream.next().await {
            match msg {
                Ok(tungstenite::Message::Binary(data)) => {
                    decoder.feed(&data);
                    if let Some(end) = forward(&mut decoder, id, &ev).await {
                        return end;
                    }
                }
                Ok(tungstenite::Message::Text(_)) => {
                    return ReadEnd::Malformed("text frames are not part of the protocol".into());
                }
                Ok(tungstenite::Message::Close(_)) | Err(_) => return ReadEnd::Eof,
                Ok(_) => {}
            }
        }
        ReadEnd::Eof
    };
    let out = outbox.clone();
    let write = async move {
        while let Some(b) = out.pop().await {
            if sink.send(tungstenite::Message::Binary(b)).await.is_err() {
                out.close();
                return;
            }
        }
        let _ = sink.close().await;
    };
    drive(id, outbox, events, read, write).await;
}

async fn accept_loop(
    listener: TcpListener,
    websocket: bool,
    ids: Arc<AtomicU64>,
    events: mpsc::Sender<Event>,
    limit: usize,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        tokio::select! {
            r = listener.accept() => match r {
                Ok((stream, peer)) => {
                    let id = ids.fetch_add(1, Ordering::Relaxed);
                    debug!("client {id} connected from {peer}");
                    let events = events.clone();
                    if websocket {
                        tokio::spawn(serve_ws(stream, id, events, limit));
                    } else {
                        tokio::spawn(serve_tcp(stream, id, events, limit));
                    }
                }
                Err(e) => {
                    warn!("accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                }
            },
            _ = shutdown.changed() => return,
        }
    }
}

pub struct ServerHandle {
    pub tcp_addr: SocketAddr,
    pub ws_addr: Option<SocketAddr>,
    stats: Arc<Stats>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Stops accepting, stops the source and closes every client.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr).await.map_err(|source| ServerError::Bind { addr: addr.to_string(), source })
}

/// Binds both endpoints, opens the source and spawns the server tasks.
pub async fn start(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    let source = Source::open(&config.source)?;
    let tcp = bind(config.tcp_bind).await?;
    let ws = match &config.ws_bind {
        Some(a) => Some(bind(*a).await?),
        None => None,
    };
    let tcp_addr = tcp.local_addr().map_err(|source| ServerError::Bind { addr: config.tcp_bind.to_string(), source })?;
    let ws_addr = ws.as_ref().and_then(|l| l.local_addr().ok());

    let stats = Arc::new(Stats::default());
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let (events_tx, events_rx) = mpsc::channel(EVENT_QUEUE);
    let (commands_tx, commands_rx) = mpsc::channel(COMMAND_QUEUE);
    let ids = Arc::new(AtomicU64::new(1));
    let (greeted_tx, greeted_rx) = watch::channel(0usize);

    let sequencer = Sequencer {
        session: Session::new(config.session.clone()),
        clients: BTreeMap::new(),
        commands: commands_tx,
        stats: stats.clone(),
        epoch: Instant::now(),
        greeted: greeted_tx,
    };
    let mut tasks = vec![tokio::spawn(sequencer.run(events_rx, Duration::from_secs_f64(config.heartbeat_interval), shutdown_rx.clone()))];
    let wait_for = config.wait_for_clients;
    let (source_events, mut source_shutdown) = (events_tx.clone(), shutdown_rx.clone());
    tasks.push(tokio::spawn(async move {
        let mut greeted = greeted_rx;
        if wait_for > 0 {
            tokio::select! {
                r = greeted.wait_for(|n| *n >= wait_for) => if r.is_err() { return },
                _ = source_shutdown.changed() => return,
            }
        }
        source.run(source_events, commands_rx, source_shutdown).await
    }));
    tasks.push(tokio::spawn(accept_loop(
        tcp,
        false,
        ids.clone(),
        events_tx.clone(),
        config.client_queue_limit,
        shutdown_rx.clone(),
    )));
    if let Some(ws) = ws {
        tasks.push(tokio::spawn(accept_loop(ws, true, ids, events_tx, config.client_queue_limit, shutdown_rx)));
    }
    info!("listening on tcp {tcp_addr}{}", ws_addr.map(|a| format!(", websocket {a}")).unwrap_or_default());
    Ok(ServerHandle { tcp_addr, ws_addr, stats, shutdown: shutdown_tx, tasks })
}

/// Serves until ctrl-c.
pub async fn run(config: ServerConfig) -> Result<StatsSnapshot, ServerError> {
    let handle = start(config).await?;
    let _ = tokio::signal::ctrl_c().await;
    info!("shutting down");
    let stats = handle.stats();
    handle.shutdown().await;
    Ok(stats)
}
