//! WebSocket transport: one session per connection at `/ws`.

use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::Notify;
use tracing::{debug, info, warn};

use crate::outbox::{Outbox, DEFAULT_OUTBOX_CAPACITY};
use crate::protocol::{ClientMessage, ErrorCode, ServerMessage};
use crate::registry::{Registration, Registry, DEFAULT_MAX_SESSIONS, RETRY_AFTER_MS};
use crate::session::{Session, SessionError, DEFAULT_DECIMATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    pub max_sessions: usize,
    pub decimation: u32,
    pub outbox_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_sessions: DEFAULT_MAX_SESSIONS,
            decimation: DEFAULT_DECIMATION,
            outbox_capacity: DEFAULT_OUTBOX_CAPACITY,
        }
    }
}

#[derive(Debug, Clone)]
struct AppState {
    cfg: ServerConfig,
    registry: Registry,
}

pub fn router(cfg: ServerConfig) -> Router {
    let state = AppState {
        cfg,
        registry: Registry::new(cfg.max_sessions),
    };
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, ?cfg, "session service listening");
    axum::serve(listener, router(cfg)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

struct Shared {
    outbox: Mutex<Outbox>,
    notify: Notify,
    closed: std::sync::atomic::AtomicBool,
}

impl Shared {
    fn push_all(&self, msgs: impl IntoIterator<Item = ServerMessage>) {
        let mut o = self.outbox.lock().unwrap_or_else(|e| e.into_inner());
        for m in msgs {
            o.push(m);
        }
        drop(o);
        self.notify.notify_one();
    }
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let shared = Arc::new(Shared {
        outbox: Mutex::new(Outbox::new(state.cfg.outbox_capacity)),
        notify: Notify::new(),
        closed: Default::default(),
    });

    // Writer: drains the outbox so slow clients never stall ingestion.
    let writer_shared = shared.clone();
    let writer = tokio::spawn(async move {
        use std::sync::atomic::Ordering;
        loop {
            writer_shared.notify.notified().await;
            let batch = writer_shared.outbox.lock().unwrap_or_else(|e| e.into_inner()).drain();
            for m in batch {
                if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                    return;
                }
            }
            if writer_shared.closed.load(Ordering::Acquire) {
                let _ = sink.close().await;
                return;
            }
        }
    });

    let mut session: Option<(Session, Registration)> = None;
    while let Some(msg) = stream.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let parsed: ClientMessage = match serde_json::from_str(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                shared.push_all([ServerMessage::error(ErrorCode::BadMessage, e.to_string())]);
                continue;
            }
        };
        match session.take() {
            None => match parsed {
                ClientMessage::Init { config } => {
                    let registry = state.registry.clone();
                    let decimation = state.cfg.decimation;
                    let opened = tokio::task::spawn_blocking(move || -> Result<_, SessionError> {
                        let reg = registry.register(&config.session_id)?;
                        let s = Session::open(*config, decimation)?;
                        Ok((s, reg))
                    })
                    .await;
                    match opened {
                        Ok(Ok((s, reg))) => {
                            info!(session = s.id(), mode = ?s.config().mode, "session opened");
                            shared.push_all([s.ack()]);
                            session = Some((s, reg));
                        }
                        Ok(Err(e)) => {
                            debug!(code = ?e.code, detail = %e.detail, "init rejected");
                            let retry = (e.code == ErrorCode::Capacity).then_some(RETRY_AFTER_MS);
                            shared.push_all([ServerMessage::Error {
                                code: e.code,
                                detail: e.detail,
                                retry_after_ms: retry,
                            }]);
                        }
                        Err(e) => {
                            warn!(error = %e, "session setup task failed");
                            shared.push_all([ServerMessage::error(ErrorCode::Internal, "session setup failed")]);
                        }
                    }
                }
                _ => shared.push_all([ServerMessage::error(
                    ErrorCode::NotInitialized,
                    "send an init message first",
                )]),
            },
            Some((mut s, reg)) => {
                let result = tokio::task::spawn_blocking(move || {
                    let out = s.handle(parsed);
                    (s, out)
                })
                .await;
                match result {
                    Ok((s, out)) => {
                        shared.push_all(out);
                        session = Some((s, reg));
                    }
                    Err(e) => {
                        warn!(error = %e, "session task failed; closing");
                        shared.push_all([ServerMessage::error(ErrorCode::Internal, "session failed")]);
                        break;
                    }
                }
            }
        }
    }

    if let Some((s, _)) = &session {
        info!(session = s.id(), "session closed");
    }
    shared.closed.store(true, std::sync::atomic::Ordering::Release);
    shared.notify.notify_one();
    let _ = writer.await;
}
