//! Tracking sources feeding the sequencer.

use crate::config::SourceConfig;
use crate::hub::{Event, ServerError};
use crate::session::ClientId;
use needleguide_core::protocol::{encode, FrameDecoder, Message, SimCommand};
use needleguide_core::recording::Recording;
use needleguide_core::simulator::Simulator;
use std::time::Duration;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch};
use tokio::time::Instant;
use tracing::{debug, warn};

pub type Command = (SimCommand, Option<ClientId>);

pub enum Source {
    Simulator { sim: Box<Simulator>, speed: f64 },
    Recording { messages: Vec<Message>, speed: f64 },
    ExternalTcp { address: String },
}

impl Source {
    /// Builds the source, reading recordings up front so a bad file fails
    /// startup rather than the session.
    pub fn open(config: &SourceConfig) -> Result<Self, ServerError> {
        Ok(match config {
            SourceConfig::Simulator { scenario, noise, rate_hz, speed } => Source::Simulator {
                sim: Box::new(
                    Simulator::new(*scenario, *noise, *rate_hz).map_err(|e| ServerError::Source(e.to_string()))?,
                ),
                speed: *speed,
            },
            SourceConfig::Recording { path, speed } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| ServerError::Source(format!("cannot open recording {}: {e}", path.display())))?;
                let rec = Recording::read(std::io::BufReader::new(file))
                    .map_err(|e| ServerError::Source(format!("bad recording {}: {e}", path.display())))?;
                Source::Recording { messages: rec.messages, speed: *speed }
            }
            SourceConfig::ExternalTcp { address } => Source::ExternalTcp { address: address.clone() },
        })
    }

    pub async fn run(self, events: mpsc::Sender<Event>, commands: mpsc::Receiver<Command>, shutdown: watch::Receiver<bool>) {
        let result = match self {
            Source::Simulator { sim, speed } => run_simulator(*sim, speed, &events, commands, shutdown).await,
            Source::Recording { messages, speed } => run_recording(messages, speed, &events, commands, shutdown).await,
            Source::ExternalTcp { address } => run_external(&address, &events, commands, shutdown).await,
        };
        if result.is_err() {
            debug!("source stopped: sequencer gone");
        }
    }
}

struct Closed;

async fn send(events: &mpsc::Sender<Event>, m: Message) -> Result<(), Closed> {
    events.send(Event::Source(m)).await.map_err(|_| Closed)
}

async fn reject(events: &mpsc::Sender<Event>, origin: Option<ClientId>, reason: String) -> Result<(), Closed> {
    events.send(Event::SourceRejected { origin, reason }).await.map_err(|_| Closed)
}

/// Queues a command on the simulator; true if it switches scenario.
async fn apply(sim: &mut Simulator, cmd: Command, events: &mpsc::Sender<Event>) -> Result<bool, Closed> {
    let (cmd, origin) = cmd;
    match sim.apply_command(&cmd) {
        Ok(()) => Ok(matches!(cmd, SimCommand::SelectScenario { .. })),
        Err(e) => reject(events, origin, e.to_string()).await.map(|_| false),
    }
}

async fn run_simulator(
    mut sim: Simulator,
    speed: f64,
    events: &mpsc::Sender<Event>,
    mut commands: mpsc::Receiver<Command>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<(), Closed> {
    for m in sim.preamble() {
        send(events, m).await?;
    }
    let period = (speed > 0.0).then(|| Duration::from_secs_f64(1.0 / (sim.rate_hz() * speed)));
    let mut next = Instant::now();
    let mut reselected = false;
    loop {
        while let Ok(cmd) = commands.try_recv() {
            reselected |= apply(&mut sim, cmd, events).await?;
        }
        match sim.step() {
            Some(tick) => {
                if std::mem::take(&mut reselected) {
                    for m in sim.preamble() {
                        send(events, m).await?;
                    }
                }
                for m in tick.messages {
                    send(events, m).await?;
                }
            }
            None => {
                // finite scenario done: idle until a command or shutdown
                tokio::select! {
                    cmd = commands.recv() => match cmd {
                        Some(cmd) => reselected |= apply(&mut sim, cmd, events).await?,
                        None => return Ok(()),
                    },
                    _ = shutdown.changed() => return Ok(()),
                }
                next = Instant::now();
                continue;
            }
        }
        match period {
            Some(p) => {
                next += p;
                tokio::select! {
                    _ = tokio::time::sleep_until(next) => {}
                    _ = shutdown.changed() => return Ok(()),
                }
            }
            None => {
                if *shutdown.borrow() {
                    return Ok(());
                }
                tokio::task::yield_now().await;
            }
        }
    }
}

async fn run_recording(
    messages: Vec<Message>,
    speed: f64,
    events: &mpsc::Sender<Event>,
    mut commands: mpsc::Receiver<Command>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<(), Closed> {
    let start = Instant::now();
    let mut t0 = None;
    for m in messages {
        while let Ok((_, origin)) = commands.try_recv() {
            reject(events, origin, "a recording source does not accept commands".into()).await?;
        }
        if let (Some(t), true) = (m.timestamp(), speed > 0.0) {
            let t0 = *t0.get_or_insert(t);
            let due = start + Duration::from_secs_f64(((t - t0) / speed).max(0.0));
            tokio::select! {
                _ = tokio::time::sleep_until(due) => {}
                _ = shutdown.changed() => return Ok(()),
            }
        }
        send(events, m).await?;
    }
    loop {
        tokio::select! {
            cmd = commands.recv() => match cmd {
                Some((_, origin)) => reject(events, origin, "the recording has ended".into()).await?,
                None => return Ok(()),
            },
            _ = shutdown.changed() => return Ok(()),
        }
    }
}

/// Connects to an upstream server speaking the same protocol, forwarding its
/// messages in and client commands out; reconnects every second on failure.
async fn run_external(
    address: &str,
    events: &mpsc::Sender<Event>,
    mut commands: mpsc::Receiver<Command>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<(), Closed> {
    loop {
        let stream = tokio::select! {
            s = TcpStream::connect(address) => s,
            _ = shutdown.changed() => return Ok(()),
        };
        match stream {
            Ok(stream) => {
                let (mut rd, mut wr) = stream.into_split();
                let mut decoder = FrameDecoder::new();
                let mut buf = vec![0u8; 64 * 1024];
                loop {
                    tokio::select! {
                        n = rd.read(&mut buf) => {
                            let n = match n {
                                Ok(0) | Err(_) => break,
                                Ok(n) => n,
                            };
                            decoder.feed(&buf[..n]);
                            loop {
                                match decoder.next_message() {
                                    Ok(Some(m)) => send(events, m).await?,
                                    Ok(None) => break,
                                    Err(e) => {
                                        warn!("upstream sent malformed data: {e}");
                                        break;
                                    }
                                }
                            }
                            if decoder.is_poisoned() {
                                break;
                            }
                        }
                        cmd = commands.recv() => {
                            let Some((cmd, origin)) = cmd else { return Ok(()) };
                            let sent = match encode(&Message::SimCommand(cmd)) {
                                Ok(bytes) => wr.write_all(&bytes).await.map_err(|e| e.to_string()),
                                Err(e) => Err(e.to_string()),
                            };
                            if let Err(e) = sent {
                                reject(events, origin, format!("upstream rejected the command: {e}")).await?;
                            }
                        }
                        _ = shutdown.changed() => return Ok(()),
                    }
                }
                warn!("upstream {address} disconnected");
            }
            Err(e) => warn!("cannot reach upstream {address}: {e}"),
        }
        tokio::select! {
            _ = tokio::time::sleep(Duration::from_secs(1)) => {}
            _ = shutdown.changed() => return Ok(()),
        }
    }
}
