//! Live sessions over a WebSocket at `/session`.
//!
//! Each connection gets its own [`Engine`] whose virtual clock follows wall
//! time 1:1 from the moment of connection. The socket reader and writer talk
//! to the engine task through bounded queues only.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use rapu_core::harness::{Engine, RecordBody};
use rapu_core::{Config, Millis};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::{interval, Instant, MissedTickBehavior};
use tracing::{debug, info, warn};

use crate::protocol::{parse_inbound, Inbound, Outbound};

pub const SNAPSHOT_PERIOD: Duration = Duration::from_millis(100);
/// Engine pacing step; polls fire within this much wall time of their instant.
pub const TICK: Duration = Duration::from_millis(5);
const INBOUND_QUEUE: usize = 64;
const OUTBOUND_QUEUE: usize = 1024;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server stopped: {0}")]
    Serve(std::io::Error),
}

pub fn router(config: Config) -> Router {
    Router::new()
        .route("/session", get(upgrade))
        .with_state(Arc::new(config))
}

async fn upgrade(ws: WebSocketUpgrade, State(config): State<Arc<Config>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, Config::clone(&config)))
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, BridgeError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| BridgeError::BindFailure { addr, source })
}

/// Serves sessions on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    config: Config,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), BridgeError> {
    axum::serve(listener, router(config))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(BridgeError::Serve)
}

enum FromClient {
    Frame(Inbound),
    Malformed(String),
}

async fn session(socket: WebSocket, config: Config) {
    let (mut sink, mut stream) = socket.split();
    let (in_tx, mut in_rx) = mpsc::channel::<FromClient>(INBOUND_QUEUE);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(OUTBOUND_QUEUE);

    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let item = match msg {
                Message::Text(text) => match parse_inbound(text.as_str()) {
                    Ok(frame) => FromClient::Frame(frame),
                    Err(e) => FromClient::Malformed(e),
                },
                Message::Binary(_) => {
                    FromClient::Malformed("binary frames are not supported".into())
                }
                Message::Close(_) => break,
                Message::Ping(_) | Message::Pong(_) => continue,
            };
            if in_tx.send(item).await.is_err() {
                break;
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    info!("session opened");
    let mut live = LiveSession::new(config);
    let mut ticker = interval(TICK);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        let mut frames = Vec::new();
        tokio::select! {
            _ = ticker.tick() => live.catch_up(&mut frames),
            inbound = in_rx.recv() => match inbound {
                None => break,
                Some(FromClient::Frame(frame)) => live.apply(frame, &mut frames),
                Some(FromClient::Malformed(e)) => frames.push(Outbound::Error { error: e }),
            },
        }
        live.maybe_snapshot(&mut frames);
        let mut closed = false;
        for f in frames {
            if out_tx.send(f.to_json()).await.is_err() {
                closed = true;
                break;
            }
        }
        if closed {
            break;
        }
    }
    drop(out_tx);
    reader.abort();
    let _ = writer.await;
    info!(t_ms = live.engine.now().as_u64(), "session closed");
}

/// Engine plus the wall-clock mapping and outbound bookkeeping of one client.
struct LiveSession {
    engine: Engine,
    started: Instant,
    last_snapshot: Option<Instant>,
    transitioned: bool,
}

impl LiveSession {
    fn new(config: Config) -> Self {
        LiveSession {
            engine: Engine::live(config),
            started: Instant::now(),
            last_snapshot: None,
            transitioned: false,
        }
    }

    fn virtual_now(&self) -> Millis {
        let elapsed = self.started.elapsed().as_millis() as u64;
        Millis(elapsed).max(self.engine.now())
    }

    fn catch_up(&mut self, frames: &mut Vec<Outbound>) {
        let t = self.virtual_now();
        if let Err(e) = self.engine.advance_to(t) {
            warn!("clock error: {e}");
        }
        self.flush(frames);
    }

    fn apply(&mut self, frame: Inbound, frames: &mut Vec<Outbound>) {
        self.catch_up(frames);
        let request = frame.kind();
        debug!(request, "inbound");
        match frame.into_payload() {
            Ok(payload) => match self.engine.inject(payload) {
                Ok(t_ms) => frames.push(Outbound::Ack { request, t_ms }),
                Err(e) => frames.push(Outbound::Error {
                    error: e.to_string(),
                }),
            },
            Err(e) => frames.push(Outbound::Error {
                error: e.to_string(),
            }),
        }
        self.flush(frames);
    }

    /// Forwards every new non-poll record as an event frame.
    fn flush(&mut self, frames: &mut Vec<Outbound>) {
        for record in self.engine.take_records() {
            match record.body {
                RecordBody::Poll(_) => continue,
                RecordBody::Transition(_) => self.transitioned = true,
                _ => {}
            }
            frames.push(Outbound::Event { record });
        }
    }

    fn maybe_snapshot(&mut self, frames: &mut Vec<Outbound>) {
        let due = self
            .last_snapshot
            .is_none_or(|at| at.elapsed() >= SNAPSHOT_PERIOD);
        if due || self.transitioned {
            frames.push(Outbound::Snapshot(self.engine.snapshot()));
            self.last_snapshot = Some(Instant::now());
            self.transitioned = false;
        }
    }
}
