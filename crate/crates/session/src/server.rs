//! axum wiring: one tick task per WebSocket connection, fed by a reader
//! task through a queue and draining into a writer task through another.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use softnash_core::config::Lab;
use softnash_core::controller::Mode;
use tokio::net::TcpListener;
use tokio::sync::mpsc::{self, error::TryRecvError};
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::protocol::{ClientMessage, FinalFrame, ServerMessage};
use crate::state::SessionState;
use crate::Result;

const INBOUND_QUEUE: usize = 1024;
const OUTBOUND_QUEUE: usize = 64;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub lab: Arc<Lab>,
    /// Static UI bundle served under `/`.
    pub assets: Option<PathBuf>,
    /// Where per-session traces are written.
    pub trace_dir: PathBuf,
    /// Session `i` uses target-path seed `seed + i`.
    pub seed: u64,
    pub initial_mode: Mode,
}

struct Shared {
    cfg: ServerConfig,
    next_id: AtomicU64,
}

pub fn router(cfg: ServerConfig) -> Router {
    let assets = cfg.assets.clone();
    let shared = Arc::new(Shared { cfg, next_id: AtomicU64::new(0) });
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.trace_dir)?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(cfg)).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_connection(socket, shared))
}

enum Inbound {
    Frame(ClientMessage),
    Malformed(String),
}

async fn run_connection(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let cfg = &shared.cfg;
    let state = match SessionState::new(cfg.lab.clone(), id, cfg.seed.wrapping_add(id), cfg.initial_mode) {
        Ok(s) => s,
        Err(e) => {
            log::error!("session {id}: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel(INBOUND_QUEUE);
    let (out_tx, mut out_rx) = mpsc::channel::<ServerMessage>(OUTBOUND_QUEUE);

    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let item = match msg {
                Message::Text(t) => match ClientMessage::parse(t.as_str()) {
                    Ok(m) => Inbound::Frame(m),
                    Err(e) => Inbound::Malformed(e),
                },
                Message::Binary(_) => Inbound::Malformed("binary frames are not supported".into()),
                Message::Close(_) => break,
                _ => continue,
            };
            if in_tx.send(item).await.is_err() {
                break;
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            let last = matches!(msg, ServerMessage::Final(_));
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
            if last {
                let _ = sink.close().await;
                break;
            }
        }
    });

    log::info!("session {id} opened");
    let final_frame = tick_loop(state, in_rx, &out_tx, cfg).await;
    if let Some(f) = final_frame {
        let _ = out_tx.send(ServerMessage::Final(f)).await;
    }
    drop(out_tx);
    let _ = writer.await;
    reader.abort();
    log::info!("session {id} closed");
}

/// Runs the session at the plant rate until `end`, disconnect or path
/// exhaustion. Per tick: drain inputs in arrival order, step, emit.
async fn tick_loop(
    mut state: SessionState,
    mut inbox: mpsc::Receiver<Inbound>,
    outbox: &mpsc::Sender<ServerMessage>,
    cfg: &ServerConfig,
) -> Option<FinalFrame> {
    let mut clock = tokio::time::interval(Duration::from_secs_f64(state.lab().period()));
    clock.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut connected = true;
    loop {
        clock.tick().await;
        let mut ended = false;
        loop {
            match inbox.try_recv() {
                Ok(Inbound::Frame(ClientMessage::End)) => {
                    ended = true;
                    break;
                }
                Ok(Inbound::Frame(m)) => {
                    if let Some(reply) = state.handle(&m) {
                        let _ = outbox.try_send(reply);
                    }
                }
                Ok(Inbound::Malformed(detail)) => {
                    let _ = outbox.try_send(ServerMessage::Error { detail });
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    connected = false;
                    break;
                }
            }
        }
        if ended || !connected || state.exhausted() {
            break;
        }
        match state.tick() {
            // Dropped when the client is slow to read.
            Ok(Some(frame)) => {
                let _ = outbox.try_send(frame);
            }
            Ok(None) => {}
            Err(e) => {
                let _ = outbox.try_send(ServerMessage::Error { detail: e.to_string() });
                break;
            }
        }
    }
    let frame = finish(&state, cfg);
    connected.then_some(frame)
}

fn finish(state: &SessionState, cfg: &ServerConfig) -> FinalFrame {
    let metrics = state.finalize();
    let name = format!("session-{:04}.csv", state.id());
    let trace = std::fs::create_dir_all(&cfg.trace_dir)
        .and_then(|_| std::fs::File::create(cfg.trace_dir.join(&name)))
        .map_err(softnash_core::Error::from)
        .and_then(|f| {
            let mut w = std::io::BufWriter::new(f);
            state.record().write_csv(&mut w)?;
            w.flush().map_err(Into::into)
        });
    match trace {
        Ok(()) => FinalFrame { metrics, trace: Some(name) },
        Err(e) => {
            log::error!("session {}: trace not written: {e}", state.id());
            FinalFrame { metrics, trace: None }
        }
    }
}
